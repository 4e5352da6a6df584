pub mod assembly;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod obstruction;
pub mod sweep;

pub use assembly::{assemble_operator, BcFamily, Coefficient, DiscreteNonlocalOperator, ExampleId};
pub use linalg::{numerical_kernel, solve, KernelResult, Solution, TolRule};
pub use mesh::{generate_graded_mesh, Marker, Mesh, PointLocator, Stencil};
pub use obstruction::{obstruction_test, ObstructionReport};
pub use sweep::{index_proxy_sweep, SweepRow, SweepSpec};
