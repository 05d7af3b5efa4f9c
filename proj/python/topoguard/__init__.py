# Copyright 2026 The Topoguard Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Topology-aware private embedding retrieval."""

from ._core import (
    GalleryIndex,
    TopoguardError,
    adaptive_margin,
    aggregate_epsilon,
    calibrate_sigma,
    camera_affinity,
    clip_rows,
    compactness,
    compose_spends,
    diagonal_gaussian_kl,
    exact_ot_cost,
    gaussian_at,
    generate_synthetic,
    marginal_kl,
    mia_advantage,
    pac_bound,
    pairwise_cosine_dissimilarity,
    perturbation_bound,
    privatize_rows,
    refine_features,
    row_normalize,
    row_softmax,
    sgd_step_with_decay,
    sinkhorn,
    spectral_norm,
    spectral_normalize,
    uniform_at,
)

__all__ = [
    "GalleryIndex",
    "TopoguardError",
    "adaptive_margin",
    "aggregate_epsilon",
    "calibrate_sigma",
    "camera_affinity",
    "clip_rows",
    "compactness",
    "compose_spends",
    "diagonal_gaussian_kl",
    "exact_ot_cost",
    "gaussian_at",
    "generate_synthetic",
    "marginal_kl",
    "mia_advantage",
    "pac_bound",
    "pairwise_cosine_dissimilarity",
    "perturbation_bound",
    "privatize_rows",
    "refine_features",
    "row_normalize",
    "row_softmax",
    "sgd_step_with_decay",
    "sinkhorn",
    "spectral_norm",
    "spectral_normalize",
    "uniform_at",
]

__version__ = "0.1.0"
