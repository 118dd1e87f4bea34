from subgoal_rs.learners.cadrl import ActionSet, CadrlAgent, cadrl_select_action, initialize_from_demos
from subgoal_rs.learners.network import TrainingDiverged, ValueNetwork, train_value_network
from subgoal_rs.learners.tabular import LinearSchedule, TabularLearner, select_action_egreedy, tabular_update
