//! Per-subcommand parameters. Every field is a long flag and a key of the
//! matching `[section]` in the config file; the command line wins.

use clap::Args;
use serde::{Deserialize, Serialize};

macro_rules! params {
    ($(#[$meta:meta])* $name:ident { $( $(#[$fmeta:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Args, Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
        #[serde(deny_unknown_fields, rename_all = "kebab-case")]
        pub struct $name {
            $(
                $(#[$fmeta])*
                #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Values from `self`, falling back to `under`.
            pub fn overlay(self, under: Self) -> Self {
                Self { $( $field: self.$field.or(under.$field), )* }
            }

            /// Every field filled, defaults where unset.
            pub fn resolved(self) -> Self {
                Self { $( $field: Some(self.$field.unwrap_or_else(|| $default)), )* }
            }

            $(
                #[allow(dead_code)]
                pub fn $field(&self) -> $ty {
                    self.$field.clone().unwrap_or_else(|| $default)
                }
            )*
        }
    };
}

params! {
    /// Normalized-increment moment checks.
    MomentsParams {
        /// bernoulli | gaussian | uniform | shake | plain | all
        scheme: String = "all".into(),
        /// Bernoulli survival probability.
        p: f64 = 0.9,
        /// Gaussian noise standard deviation.
        nu: f64 = 1.0 / 3.0,
        /// Uniform noise half-width.
        beta: f64 = 0.577,
        /// Block count K (dt = 1/K).
        blocks: usize = 10,
        /// Number of increments drawn per scheme.
        draws: usize = 1_000_000,
    }
}

params! {
    /// Analytic / finite-difference / Monte Carlo comparison of u(x, 0).
    FkParams {
        f: f64 = 2.0,
        eps: f64 = 0.5,
        x_min: f64 = -3.0,
        x_max: f64 = 3.0,
        /// Number of evaluation points in [x-min, x-max].
        x_points: usize = 7,
        /// Monte Carlo paths per point.
        paths: usize = 100_000,
        /// Euler-Maruyama steps per path.
        steps: usize = 64,
        nx: usize = 801,
        /// Time steps; 0 picks the smallest stable count.
        nt: usize = 2000,
        domain_min: f64 = -20.0,
        domain_max: f64 = 20.0,
    }
}

params! {
    /// Loss landscape sweep over (eps, f).
    LandscapeParams {
        /// rugged | double-well
        dataset: String = "rugged".into(),
        /// Read samples (`y,label` rows) from a file instead.
        dataset_file: String = String::new(),
        size: usize = 64,
        data_seed: u64 = 7,
        f_min: f64 = -6.0,
        f_max: f64 = 6.0,
        f_step: f64 = 0.01,
        eps: Vec<f64> = vec![0.0, 0.3, 0.6, 1.0],
        /// l1 | l2 | l2-root
        metric: String = "l2".into(),
        /// analytic | fd | mc
        route: String = "analytic".into(),
        paths: usize = 10_000,
        steps: usize = 16,
        nx: usize = 801,
        domain_min: f64 = -20.0,
        domain_max: f64 = 20.0,
    }
}

params! {
    /// Minibatch SGD on J_eps(f).
    SgdParams {
        dataset: String = "double-well".into(),
        dataset_file: String = String::new(),
        size: usize = 64,
        data_seed: u64 = 42,
        eps: f64 = 0.0,
        metric: String = "l2".into(),
        /// Minibatch size; 0 means the whole dataset.
        batch_size: usize = 0,
        lr: f64 = 10.0,
        iterations: usize = 500,
        init_f: f64 = 5.0,
        /// analytic | central | central:<h>
        grad: String = "analytic".into(),
        /// Write the basin map of J_{basin-eps} here as well.
        basin_out: String = String::new(),
        basin_eps: f64 = 0.0,
    }
}

params! {
    /// Finite-difference Kolmogorov solve with constant coefficients.
    PdeParams {
        f: f64 = 2.0,
        /// Diffusion coefficient g; defaults to f.
        g: f64 = f64::NAN,
        eps: f64 = 0.5,
        /// sigmoid | logistic | constant
        terminal: String = "sigmoid".into(),
        terminal_scale: f64 = 1.0,
        terminal_shift: f64 = 0.0,
        terminal_value: f64 = 0.5,
        /// backward (u(x, t)) | forward (v(x, tau))
        direction: String = "backward".into(),
        x_min: f64 = -20.0,
        x_max: f64 = 20.0,
        nx: usize = 801,
        /// Time steps; 0 picks the smallest stable count.
        nt: usize = 0,
        /// Number of time levels written, evenly spaced, ends included.
        t_levels: usize = 11,
        /// Write every n-th space point.
        x_stride: usize = 1,
    }
}

params! {
    /// Toy residual network training with inverted dropout.
    ToynetParams {
        /// Survival probabilities to train with.
        p: Vec<f64> = vec![1.0, 0.9],
        seeds: Vec<u64> = vec![0, 1, 2, 3, 4],
        epochs: usize = 100,
        batch_size: usize = 32,
        lr: f64 = 0.1,
        weight_decay: f64 = 1e-4,
        data_seed: u64 = 0,
        width: usize = 16,
        blocks: usize = 8,
        /// tanh | relu
        activation: String = "tanh".into(),
        save_checkpoints: bool = false,
    }
}
