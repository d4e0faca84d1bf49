"""Ready-made sweeps: recovery rate against stride, and NMSE against DFT length under noise."""

from __future__ import annotations

import math

from .experiment import ExperimentConfig


def stride_sweep_config(trials: int = 100, rng_seed: int = 0, **overrides) -> ExperimentConfig:
    """Recovery probability vs k: N=64, W=16, K=16, L in {2, 4, 8, 16}."""
    kw = dict(N=64, W=16, window="square", L_values=(2, 4, 8, 16), K_values=(16,),
              k_range=tuple(range(2, 13)), snr_db_values=(math.inf,), trials_per_cell=trials,
              methods=("STFT-GESPAR", "PS-GESPAR", "GLA", "PCGP"), rng_seed=rng_seed,
              gespar_tau=1e-4, gespar_max_swaps=50000, altproj_restarts=50,
              altproj_max_iterations=1000)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def noise_sweep_config(trials: int = 100, rng_seed: int = 0, **overrides) -> ExperimentConfig:
    """NMSE vs k under noise: N=32, L=1, W=16, K in {2, 4, 8, 16, 32}, STFT-GESPAR only."""
    kw = dict(N=32, W=16, window="square", L_values=(1,), K_values=(2, 4, 8, 16, 32),
              k_range=tuple(range(2, 13)), snr_db_values=(5.0, 15.0, 25.0, 35.0),
              trials_per_cell=trials, methods=("STFT-GESPAR",), rng_seed=rng_seed,
              gespar_tau=1e-4, gespar_max_swaps=50000)
    kw.update(overrides)
    return ExperimentConfig(**kw)


PRESETS = {"stride-sweep": stride_sweep_config, "noise-sweep": noise_sweep_config}
