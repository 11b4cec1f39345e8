//! Oracle-backed metrics: agreement, best-of-n rating, win rate, cluster
//! purity and reward-hacking detection.

mod metrics;
mod report;

pub use metrics::{
    agreement, best_of_n_rating, best_of_n_select, cluster_purity, generate_candidates, hacking_curve, random_selection_rating,
    win_rate, HackingReport, OracleComparator, SelectionMode, DEFAULT_HACKING_MARGIN, HACKING_WINDOW,
};
pub use report::{write_series_csv, EvalReport, SeriesPoint};
