//! Hamilton-Jacobi reachability on grids, with a coupling-as-disturbance
//! decomposition that under-approximates high-dimensional backward
//! reachable sets from low-dimensional solves.

pub mod grid;
pub mod hjsolver;
pub mod shapes;
pub mod systems;
pub mod decompose;
pub mod reconstruct;
pub mod pipeline;
