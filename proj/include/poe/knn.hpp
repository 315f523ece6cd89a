#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "poe/errors.hpp"

namespace poe {

/// Stored (query, prediction) pairs searched by exact 1-nearest-neighbour.
template <typename Prediction>
class NeighborIndex {
 public:
  NeighborIndex() = default;

  void add(Eigen::VectorXd query, Prediction prediction) {
    if (!queries_.empty() && query.size() != queries_.front().size()) {
      throw DimensionError("query has dimension " + std::to_string(query.size()) + ", index holds " +
                           std::to_string(queries_.front().size()));
    }
    if (!query.allFinite()) throw ParameterError("index queries must be finite");
    queries_.push_back(std::move(query));
    predictions_.push_back(std::move(prediction));
  }

  std::size_t size() const noexcept { return queries_.size(); }
  bool empty() const noexcept { return queries_.empty(); }
  Eigen::Index dim() const { return queries_.empty() ? 0 : queries_.front().size(); }
  const Eigen::VectorXd& query(std::size_t i) const { return queries_.at(i); }
  const Prediction& prediction(std::size_t i) const { return predictions_.at(i); }

  /// Index of the Euclidean-nearest stored query; ties go to the lowest index.
  std::size_t nearest(const Eigen::VectorXd& q) const {
    if (queries_.empty()) throw StateError("neighbour index is empty");
    if (q.size() != dim()) {
      throw DimensionError("query has dimension " + std::to_string(q.size()) + ", index holds " +
                           std::to_string(dim()));
    }
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < queries_.size(); ++i) {
      const double d = (queries_[i] - q).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

 private:
  std::vector<Eigen::VectorXd> queries_;
  std::vector<Prediction> predictions_;
};

template <typename Prediction>
const Prediction& knn_predict(const NeighborIndex<Prediction>& index, const Eigen::VectorXd& query) {
  return index.prediction(index.nearest(query));
}

}  // namespace poe
