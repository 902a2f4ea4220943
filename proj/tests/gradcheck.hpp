#pragma once

// Central finite-difference gradient checking shared by the unit tests and
// the acceptance suite. Independent of the backward implementations it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "chemlm/tensor/tensor.hpp"

namespace gradcheck {

using chemlm::tg::Tensor;

struct Result {
  bool ok = true;
  std::string detail;
};

// fn rebuilds the graph from the current leaf values and returns a scalar.
inline Result check(std::vector<Tensor> leaves,
                    const std::function<Tensor(std::vector<Tensor>&)>& fn,
                    float h = 1e-2f, float rel_tol = 1e-3f) {
  for (auto& l : leaves) l.set_requires_grad(true);
  Tensor loss = fn(leaves);
  for (auto& l : leaves) l.zero_grad();
  chemlm::tg::backward(loss);
  Result res;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].data();
    const auto analytic = leaves[li].grad();
    for (size_t j = 0; j < vals.size(); ++j) {
      float orig = vals[j];
      vals[j] = orig + h;
      float fp = fn(leaves).item();
      vals[j] = orig - h;
      float fm = fn(leaves).item();
      vals[j] = orig;
      float fd = (fp - fm) / (2.0f * h);
      float g = analytic[j];
      float denom = std::max({std::fabs(g), std::fabs(fd), 1.0f});
      if (std::fabs(g - fd) > rel_tol * denom) {
        res.ok = false;
        res.detail = "leaf " + std::to_string(li) + " elem " + std::to_string(j) +
                     ": analytic " + std::to_string(g) + " vs fd " + std::to_string(fd);
        return res;
      }
    }
  }
  return res;
}

}  // namespace gradcheck
