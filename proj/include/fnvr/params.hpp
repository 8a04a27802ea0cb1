#pragma once

#include <string>
#include <unordered_map>

#include "fnvr/adam.hpp"
#include "fnvr/autodiff.hpp"

namespace fnvr {

// Optimizer groups with independent learning rates.
enum ParamGroup : int {
  kGroupFields = 0,
  kGroupTrajectories = 1,
  kGroupDeformCodes = 2,
  kGroupSharpness = 3,
  kNumParamGroups = 4,
};

template <class Real>
struct Param {
  std::string name;
  Tensor<Real> value;
  int group = kGroupFields;
  AdamState<Real> adam;
  bool adam_ready = false;
  bool frozen = false;  // excluded from optimization (e.g. camera, warm-up)
};

// Per-graph registry mapping persistent parameters to leaf nodes. One staging
// per graph; parameter values are copied into leaves on first use.
template <class Real>
struct Staging {
  Graph<Real>* g = nullptr;
  bool train = true;

  explicit Staging(Graph<Real>& graph, bool train_mode = true) : g(&graph), train(train_mode) {}

  Val<Real> use(Param<Real>& p) {
    auto it = ids_.find(&p);
    if (it != ids_.end()) return make_val(*g, it->second);
    const int id = g->leaf(p.value, train && !p.frozen);
    ids_.emplace(&p, id);
    return make_val(*g, id);
  }

  // substitute an existing graph value for a parameter (finite-difference tests)
  void set_override(Param<Real>& p, Val<Real> v) { ids_[&p] = v.id; }

  // staged node for a parameter, or -1 when the parameter never entered the graph
  int node_of(const Param<Real>& p) const {
    auto it = ids_.find(const_cast<Param<Real>*>(&p));
    return it == ids_.end() ? -1 : it->second;
  }

 private:
  std::unordered_map<Param<Real>*, int> ids_;
};

}  // namespace fnvr
