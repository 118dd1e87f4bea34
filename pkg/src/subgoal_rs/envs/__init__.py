from subgoal_rs.envs.gridworld import GridworldEnv, GridworldScenario, gridworld_mdp, step_grid
from subgoal_rs.envs.social import (
    AgentState,
    JointState,
    SocialNavEnv,
    SocialNavScenario,
    Termination,
    behind_predicate,
    min_separation,
    social_reward,
    step_social,
)
