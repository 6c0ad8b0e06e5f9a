pub mod agents;
pub mod bt;
pub mod eval;
pub mod llm;
pub mod orchestrator;
pub mod scalar;
pub mod sim;

pub type Pose = sim::Pose<f64>;
pub type World = sim::World<f64>;
pub type Scenario = sim::Scenario<f64>;
pub type VehicleState = sim::VehicleState<f64>;

pub type EnsembleWeights = eval::EnsembleWeights<f64>;
pub type ExactWeights = eval::EnsembleWeights<num_rational::Ratio<i64>>;
pub type IrIndex = eval::IrIndex<f64>;
