// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "guidelab/classifier.hpp"
#include "guidelab/tensor.hpp"

namespace guidelab {

/// A[j][i]: accuracy on task j's test split after training through task i.
/// Indices are 1-based and only the lower triangle j <= i exists.
class AccuracyMatrix {
  public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t num_tasks);

    std::size_t num_tasks() const { return n_; }
    /// Throws IndexError outside the triangle, ContractError for values
    /// outside [0, 1].
    void set(std::size_t j, std::size_t i, double value);
    std::optional<double> get(std::size_t j, std::size_t i) const;
    double at(std::size_t j, std::size_t i) const;
    /// True when A[j][i] is present for every j <= i.
    bool row_complete(std::size_t i) const;
    /// Largest i whose row is complete, along with all earlier rows.
    std::size_t tasks_completed() const;

    nlohmann::json to_json() const;
    static AccuracyMatrix from_json(const nlohmann::json& doc);
    /// `task_trained,task_evaluated,accuracy`, one line per present entry.
    void write_csv(std::ostream& out) const;

  private:
    std::size_t index(std::size_t j, std::size_t i) const;
    std::size_t n_ = 0;
    std::vector<std::optional<double>> cells_;
};

/// (1/i) sum_{j<=i} A[j][i].
double avg_accuracy(const AccuracyMatrix& m, std::size_t i);
/// (1/(i-1)) sum_{j<i} max_{j<=k<=i} (A[j][k] - A[j][i]). Requires i >= 2.
double avg_forgetting(const AccuracyMatrix& m, std::size_t i);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

/// k-NN manifold estimate in raw feature space. A point lies inside a set's
/// manifold when it is within some member's distance to that member's k-th
/// nearest neighbour (self excluded). Precision: generated points inside the
/// real manifold. Recall: real points inside the generated manifold.
PrecisionRecall knn_precision_recall(const Tensor& real, const Tensor& generated, std::size_t k = 3);

struct EmbeddingRow {
    std::vector<double> features;
    int label = 0;
    std::string source;
};

/// Penultimate-layer features of `classifier` for each row of `samples`.
std::vector<EmbeddingRow> export_embeddings(const Classifier& classifier, const Tensor& samples,
                                            std::span<const int> labels, const std::string& source);
/// `f_0,...,f_{k-1},label,source` with a header line.
void write_embeddings_csv(std::ostream& out, const std::vector<EmbeddingRow>& rows);

}  // namespace guidelab
