// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "guidelab/csv.hpp"
#include "guidelab/errors.hpp"

namespace guidelab {

AccuracyMatrix::AccuracyMatrix(std::size_t num_tasks) : n_(num_tasks), cells_(num_tasks * (num_tasks + 1) / 2) {}

std::size_t AccuracyMatrix::index(std::size_t j, std::size_t i) const {
    if (j < 1 || i > n_ || j > i) {
        throw IndexError("accuracy matrix: entry (" + std::to_string(j) + ", " + std::to_string(i) +
                         ") outside the lower triangle of " + std::to_string(n_) + " tasks");
    }
    return i * (i - 1) / 2 + (j - 1);
}

void AccuracyMatrix::set(std::size_t j, std::size_t i, double value) {
    if (!(value >= 0.0 && value <= 1.0)) throw ContractError("accuracy matrix: value outside [0, 1]");
    cells_[index(j, i)] = value;
}

std::optional<double> AccuracyMatrix::get(std::size_t j, std::size_t i) const { return cells_[index(j, i)]; }

double AccuracyMatrix::at(std::size_t j, std::size_t i) const {
    const auto v = get(j, i);
    if (!v) {
        throw ContractError("accuracy matrix: entry (" + std::to_string(j) + ", " + std::to_string(i) + ") missing");
    }
    return *v;
}

bool AccuracyMatrix::row_complete(std::size_t i) const {
    if (i < 1 || i > n_) return false;
    for (std::size_t j = 1; j <= i; ++j) {
        if (!get(j, i)) return false;
    }
    return true;
}

std::size_t AccuracyMatrix::tasks_completed() const {
    std::size_t i = 0;
    while (i < n_ && row_complete(i + 1)) ++i;
    return i;
}

nlohmann::json AccuracyMatrix::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 1; i <= n_; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 1; j <= i; ++j) {
            const auto v = get(j, i);
            row.push_back(v ? nlohmann::json(*v) : nlohmann::json());
        }
        rows.push_back(std::move(row));
    }
    return {{"num_tasks", n_}, {"after_task", std::move(rows)}};
}

AccuracyMatrix AccuracyMatrix::from_json(const nlohmann::json& doc) {
    AccuracyMatrix m(doc.at("num_tasks").get<std::size_t>());
    const auto& rows = doc.at("after_task");
    for (std::size_t i = 1; i <= m.n_ && i <= rows.size(); ++i) {
        const auto& row = rows[i - 1];
        for (std::size_t j = 1; j <= i && j <= row.size(); ++j) {
            if (!row[j - 1].is_null()) m.set(j, i, row[j - 1].get<double>());
        }
    }
    return m;
}

void AccuracyMatrix::write_csv(std::ostream& out) const {
    out << "task_trained,task_evaluated,accuracy\n";
    for (std::size_t i = 1; i <= n_; ++i) {
        for (std::size_t j = 1; j <= i; ++j) {
            if (const auto v = get(j, i)) out << i << ',' << j << ',' << format_number(*v) << '\n';
        }
    }
}

double avg_accuracy(const AccuracyMatrix& m, std::size_t i) {
    if (!m.row_complete(i)) throw ContractError("avg_accuracy: row " + std::to_string(i) + " is incomplete");
    double total = 0.0;
    for (std::size_t j = 1; j <= i; ++j) total += m.at(j, i);
    return total / static_cast<double>(i);
}

double avg_forgetting(const AccuracyMatrix& m, std::size_t i) {
    if (i < 2) throw ContractError("avg_forgetting: needs at least two tasks");
    for (std::size_t k = 1; k <= i; ++k) {
        if (!m.row_complete(k)) throw ContractError("avg_forgetting: row " + std::to_string(k) + " is incomplete");
    }
    double total = 0.0;
    for (std::size_t j = 1; j < i; ++j) {
        const double final_acc = m.at(j, i);
        double worst = 0.0;
        for (std::size_t k = j; k <= i; ++k) worst = std::max(worst, m.at(j, k) - final_acc);
        total += worst;
    }
    return total / static_cast<double>(i - 1);
}

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
        const double diff = a[c] - b[c];
        s += diff * diff;
    }
    return s;
}

// Squared distance from each point to its k-th nearest other point.
std::vector<double> knn_radii(std::span<const double> pts, std::size_t n, std::size_t d, std::size_t k) {
    std::vector<double> radii(n), dist(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) dist[m++] = squared_distance(&pts[i * d], &pts[j * d], d);
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        radii[i] = dist[k - 1];
    }
    return radii;
}

double coverage(std::span<const double> queries, std::size_t nq, std::span<const double> refs, std::size_t nr,
                const std::vector<double>& radii, std::size_t d) {
    std::size_t inside = 0;
    for (std::size_t q = 0; q < nq; ++q) {
        for (std::size_t r = 0; r < nr; ++r) {
            if (squared_distance(&queries[q * d], &refs[r * d], d) <= radii[r]) {
                ++inside;
                break;
            }
        }
    }
    return static_cast<double>(inside) / static_cast<double>(nq);
}

}  // namespace

PrecisionRecall knn_precision_recall(const Tensor& real, const Tensor& generated, std::size_t k) {
    if (real.rank() != 2 || generated.rank() != 2 || real.cols() != generated.cols()) {
        throw DimensionError("knn_precision_recall: need two [n, d] sets of equal d, got " +
                             shape_to_string(real.shape()) + " and " + shape_to_string(generated.shape()));
    }
    if (k < 1) throw ContractError("knn_precision_recall: k must be positive");
    const std::size_t nr = real.rows(), ng = generated.rows(), d = real.cols();
    if (nr == 0 || ng == 0) throw ContractError("knn_precision_recall: empty set");
    if (k >= nr || k >= ng) throw ContractError("knn_precision_recall: k must be smaller than both set sizes");
    const auto rv = real.values();
    const auto gv = generated.values();
    const auto real_radii = knn_radii(rv, nr, d, k);
    const auto gen_radii = knn_radii(gv, ng, d, k);
    return {coverage(gv, ng, rv, nr, real_radii, d), coverage(rv, nr, gv, ng, gen_radii, d)};
}

std::vector<EmbeddingRow> export_embeddings(const Classifier& classifier, const Tensor& samples,
                                            std::span<const int> labels, const std::string& source) {
    if (labels.size() != samples.rows()) throw DimensionError("export_embeddings: need one label per sample");
    GradModeGuard no_grad(GradMode::Disabled);
    const Tensor f = classifier.features(samples);
    const std::size_t k = f.cols();
    const auto v = f.values();
    std::vector<EmbeddingRow> rows(labels.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        rows[r].features.assign(v.begin() + static_cast<std::ptrdiff_t>(r * k),
                                v.begin() + static_cast<std::ptrdiff_t>((r + 1) * k));
        rows[r].label = labels[r];
        rows[r].source = source;
    }
    return rows;
}

void write_embeddings_csv(std::ostream& out, const std::vector<EmbeddingRow>& rows) {
    const std::size_t k = rows.empty() ? 0 : rows.front().features.size();
    for (std::size_t c = 0; c < k; ++c) out << "f_" << c << ',';
    out << "label,source\n";
    for (const auto& row : rows) {
        for (double v : row.features) out << format_number(v) << ',';
        out << row.label << ',' << row.source << '\n';
    }
}

}  // namespace guidelab
