//! Conditional flow matching: the two vector fields, ODE transport, the
//! training-tuple sampler, the joint objective and the corrected sampler.

mod field;
mod loss;
mod model;
mod ode;
mod train;
mod tuple;

pub use field::{VectorField, VectorFieldConfig};
pub use loss::{gradient_blocks, joint_loss, joint_loss_at, joint_loss_terms, GradientBlocks, JointLoss};
pub use model::{FmcpeModel, CHECKPOINT_KIND};
pub use ode::{integrate, ode_transport, transport_batch, Integrator, OdeConfig};
pub use train::{train_fmcpe, FmcpeConfig, FmcpeReport, LossPoint};
pub use tuple::{interpolate, sample_training_tuple, TrainingTuple, TupleBatch, TupleSampler};
