# Copyright (c) 2026 The powq Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Power quantization kernels, the exponent search and the powq command line."""

from ._powq import (
    PowqError,
    QuantizedTensor,
    __version__,
    beta_schedule,
    compute_scale,
    dequantize,
    dsq,
    dsq_grad,
    evaluate,
    fake_quantize,
    generate_levels,
    power_transform,
    quantize,
    reconstruction_error,
    rectified_sigmoid,
    run_cli,
    search_exponent,
)

__all__ = [
    "PowqError",
    "QuantizedTensor",
    "__version__",
    "beta_schedule",
    "compute_scale",
    "dequantize",
    "dsq",
    "dsq_grad",
    "evaluate",
    "fake_quantize",
    "generate_levels",
    "power_transform",
    "quantize",
    "reconstruction_error",
    "rectified_sigmoid",
    "run_cli",
    "search_exponent",
]
