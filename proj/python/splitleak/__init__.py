# Copyright 2026 The splitleak Authors
# SPDX-License-Identifier: Apache-2.0

"""Label leakage from split-learning gradients."""

from splitleak._core import (
    ConfigError,
    aer,
    alv,
    benchmark_dataset,
    config_digest,
    effective_config,
    gradient_noise_sigma,
    noise_gradients,
    noise_labels,
    run_attack,
    run_experiment,
)

__all__ = [
    "ConfigError",
    "aer",
    "alv",
    "benchmark_dataset",
    "config_digest",
    "effective_config",
    "gradient_noise_sigma",
    "noise_gradients",
    "noise_labels",
    "run_attack",
    "run_experiment",
]
