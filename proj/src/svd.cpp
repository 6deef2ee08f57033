// Copyright 2026 The spread-lil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spread/svd.hpp"

namespace spread {

SubspaceBasis<double> svd_top_r(const Tensor& f, std::size_t r,
                                const JacobiOptions& options) {
  if (f.dim() != 2) {
    throw DimensionError("svd_top_r expects a 2-D tensor, got " +
                         to_string(f.shape()));
  }
  return svd_top_r(f.to_matrix(), static_cast<Eigen::Index>(r), options);
}

Tensor project(const SubspaceBasis<double>& basis, const Tensor& x) {
  if (x.dim() != 2) {
    throw DimensionError("project expects a 2-D tensor, got " +
                         to_string(x.shape()));
  }
  return Tensor::from_matrix(project(basis, x.to_matrix()));
}

}  // namespace spread
