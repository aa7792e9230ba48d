"""PDE-constrained neural option pricing with independent numerical oracles."""

from .autodiff import Jet2, ParamTape, Var, jet_apply, tape_gradient
from .baselines import (ExerciseBoundary, PriceSurface, binomial_put,
                        binomial_put_value, closed_form_call, closed_form_call_jet,
                        extract_boundary, fdm_put, mc_european_call)
from .conditions import OptionSpec, OptionStyle, boundary_value, payoff, terminal_value
from .loss import LossReport, collocation_loss, compute_loss
from .market import (EvalReport, QuoteRecord, YieldSeries, derive_rate, evaluate,
                     load_quotes, load_yields, midpoint)
from .network import (NetworkConfig, NetworkParams, default_config, forward,
                      forward_values, init_params, load_params, price, save_params)
from .residual import ResidualReport, bs_operator, complementarity_residual, greeks
from .sampler import CollocationBatch, SamplerConfig, sample
from .trainer import (AdamState, TrainConfig, TrainingDiverged, TrainingTrace,
                      adam_step, smoothed_totals, train)

__version__ = "0.1.0"
