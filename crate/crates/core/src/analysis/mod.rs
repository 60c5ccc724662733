//! Parameter sweeps, rigid-baseline comparison, calibration and the CSV/SVG
//! emitters.

mod calibrate;
mod emit;
mod sweeps;
mod table;

pub use calibrate::{calibrate, measure, RATIO_STEP_TOLERANCE, TRIGGER_TOLERANCE};
pub use emit::{csv_string, emit_csv, emit_svg_plot, format_value, svg_string};
pub use sweeps::{
    plateau_end, ratio_step, sweep_ratio_vs_force, sweep_torque_vs_angle, sweep_torque_vs_force,
    sweep_trigger, PLATEAU_TOLERANCE, THREADS_ENV,
};
pub use table::{sample_grid, Column, ColumnData, NaturalSpline, SweepTable};
