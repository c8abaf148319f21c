#pragma once

#include <vector>

namespace ruled {

/// Multi-label problem with per-node costs and Potts pair costs:
///   sum_p unary[p][L_p] + sum_(p,q) weight * [L_p != L_q].
/// Nodes with fixed[p] >= 0 keep that label.
struct LabelProblem {
    struct Pair {
        int a = -1;
        int b = -1;
        double weight = 0.0;
    };

    int num_labels = 0;
    std::vector<std::vector<double>> unary;  // node x label, ignored for fixed nodes
    std::vector<int> fixed;                  // -1 for free nodes
    std::vector<Pair> pairs;

    int num_nodes() const { return static_cast<int>(fixed.size()); }
};

double labeling_cost(const LabelProblem& pb, const std::vector<int>& labels);

/// Alpha-expansion to a local optimum, expanding labels in order 0..N-1 until
/// a full sweep makes no progress. Each move is an exact binary min-cut. Free
/// nodes start at their cheapest label (lowest index on ties).
std::vector<int> alpha_expansion(const LabelProblem& pb);

} // namespace ruled
