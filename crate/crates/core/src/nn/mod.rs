//! Dense/sparse linear algebra, the three GNN backbones with analytic
//! gradients, Adam, training loops and classification metrics.

mod checkpoint;
mod classify;
mod loss;
mod matrix;
mod model;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use classify::{accuracy, classification_report, macro_f1, ClassificationReport};
pub use loss::{
    argmax, log_softmax, loss_and_grad, loss_terms, softmax, softmax_rows, LabelMode, LossTerm,
    Predictions, Targets,
};
pub use matrix::{dot, CsrMatrix, Matrix};
pub use model::{Backbone, ForwardCache, GnnModel, Gradients};
pub use optim::Adam;
pub use train::{input_gradient, train, ExtraGrad, Part, TrainConfig, Trainer};
