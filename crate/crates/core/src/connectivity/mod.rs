//! Phase-locking connectivity and the derived channel weights.

mod fit;
mod plv;

pub use fit::{
    connectivity_matrix, extract_phases, fit_weights, fit_weights_with, plv_from_windows, weights_from_json,
    weights_to_json, write_edges_csv, PlvOptions,
};
pub use plv::{
    apply_weights, apply_weights_in_place, minmax_normalize, pearson, pearson_cc, plv_pairwise, row_reduce,
    symmetrize, threshold_edges, ChannelWeights, Edge, PhaseTensor, PlvAccumulator, PlvKind, PlvMatrix,
};
