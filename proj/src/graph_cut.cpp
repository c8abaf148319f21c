#include "ruled/graph_cut.hpp"

#include <algorithm>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/boykov_kolmogorov_max_flow.hpp>

#include "ruled/error.hpp"

namespace ruled {

namespace {

using Traits = boost::adjacency_list_traits<boost::vecS, boost::vecS, boost::directedS>;
using Graph = boost::adjacency_list<
    boost::vecS, boost::vecS, boost::directedS,
    boost::property<boost::vertex_color_t, boost::default_color_type,
                    boost::property<boost::vertex_distance_t, long,
                                    boost::property<boost::vertex_predecessor_t, Traits::edge_descriptor>>>,
    boost::property<boost::edge_capacity_t, double,
                    boost::property<boost::edge_residual_capacity_t, double,
                                    boost::property<boost::edge_reverse_t, Traits::edge_descriptor>>>>;

// Binary energy sum_p c_p(x_p) + sum lambda_pq [x_p = 0, x_q = 1], lambda >= 0,
// up to a constant.
class BinaryCut {
public:
    explicit BinaryCut(int n) : g_(n + 2), cost0_(n, 0.0), cost1_(n, 0.0), n_(n) {}

    void add_unary(int p, double c0, double c1)
    {
        cost0_[p] += c0;
        cost1_[p] += c1;
    }

    // Adds V(x_p, x_q) given by its four values; requires B + C >= A + D.
    void add_pair(int p, int q, double a, double b, double c, double d)
    {
        cost1_[p] += c - a;
        cost1_[q] += d - c;
        const double lambda = b + c - a - d;
        if (lambda > 0.0) add_edge(p, q, lambda);
    }

    // Minimizer; x[p] = 1 outside the source tree.
    std::vector<int> solve()
    {
        const int s = n_, t = n_ + 1;
        for (int p = 0; p < n_; ++p) {
            const double m = std::min(cost0_[p], cost1_[p]);
            if (cost1_[p] - m > 0.0) add_edge(s, p, cost1_[p] - m);
            if (cost0_[p] - m > 0.0) add_edge(p, t, cost0_[p] - m);
        }
        boost::boykov_kolmogorov_max_flow(g_, s, t);
        const auto color = boost::get(boost::vertex_color, g_);
        std::vector<int> x(n_);
        for (int p = 0; p < n_; ++p) x[p] = boost::get(color, p) == boost::black_color ? 0 : 1;
        return x;
    }

private:
    void add_edge(int u, int v, double cap)
    {
        auto capacity = boost::get(boost::edge_capacity, g_);
        auto reverse = boost::get(boost::edge_reverse, g_);
        const auto e = boost::add_edge(u, v, g_).first;
        const auto r = boost::add_edge(v, u, g_).first;
        capacity[e] = cap;
        capacity[r] = 0.0;
        reverse[e] = r;
        reverse[r] = e;
    }

    Graph g_;
    std::vector<double> cost0_, cost1_;
    int n_;
};

void validate(const LabelProblem& pb)
{
    if (pb.num_labels < 1) throw PreconditionError("alpha_expansion: no labels");
    const int n = pb.num_nodes();
    if (static_cast<int>(pb.unary.size()) != n) throw PreconditionError("alpha_expansion: unary size mismatch");
    for (int p = 0; p < n; ++p) {
        if (pb.fixed[p] >= pb.num_labels) throw PreconditionError("alpha_expansion: fixed label out of range");
        if (pb.fixed[p] < 0 && static_cast<int>(pb.unary[p].size()) != pb.num_labels)
            throw PreconditionError("alpha_expansion: unary row size mismatch");
    }
    for (const auto& q : pb.pairs) {
        if (q.a < 0 || q.a >= n || q.b < 0 || q.b >= n || q.a == q.b)
            throw PreconditionError("alpha_expansion: bad pair");
        if (!(q.weight >= 0.0)) throw PreconditionError("alpha_expansion: negative pair weight");
    }
}

} // namespace

double labeling_cost(const LabelProblem& pb, const std::vector<int>& labels)
{
    double cost = 0.0;
    for (int p = 0; p < pb.num_nodes(); ++p)
        if (pb.fixed[p] < 0) cost += pb.unary[p][labels[p]];
    for (const auto& q : pb.pairs)
        if (labels[q.a] != labels[q.b]) cost += q.weight;
    return cost;
}

std::vector<int> alpha_expansion(const LabelProblem& pb)
{
    validate(pb);
    const int n = pb.num_nodes();
    std::vector<int> labels(n);
    std::vector<int> free_index(n, -1);
    std::vector<int> free_nodes;
    for (int p = 0; p < n; ++p) {
        if (pb.fixed[p] >= 0) {
            labels[p] = pb.fixed[p];
            continue;
        }
        labels[p] = static_cast<int>(std::min_element(pb.unary[p].begin(), pb.unary[p].end()) - pb.unary[p].begin());
        free_index[p] = static_cast<int>(free_nodes.size());
        free_nodes.push_back(p);
    }
    if (free_nodes.empty()) return labels;

    double best = labeling_cost(pb, labels);
    bool improved = true;
    while (improved) {
        improved = false;
        for (int alpha = 0; alpha < pb.num_labels; ++alpha) {
            BinaryCut cut(static_cast<int>(free_nodes.size()));
            for (int p : free_nodes) {
                const double keep = pb.unary[p][labels[p]];
                // A node already at alpha pays the same either way.
                cut.add_unary(free_index[p], keep, labels[p] == alpha ? keep : pb.unary[p][alpha]);
            }
            for (const auto& q : pb.pairs) {
                const int fa = free_index[q.a], fb = free_index[q.b];
                const double w = q.weight;
                const int la = labels[q.a], lb = labels[q.b];
                if (fa < 0 && fb < 0) continue;
                if (fa >= 0 && fb >= 0) {
                    cut.add_pair(fa, fb, la != lb ? w : 0.0, la != alpha ? w : 0.0, alpha != lb ? w : 0.0, 0.0);
                } else if (fa >= 0) {
                    cut.add_unary(fa, la != lb ? w : 0.0, alpha != lb ? w : 0.0);
                } else {
                    cut.add_unary(fb, la != lb ? w : 0.0, la != alpha ? w : 0.0);
                }
            }
            const std::vector<int> x = cut.solve();
            std::vector<int> trial = labels;
            for (int p : free_nodes)
                if (x[free_index[p]]) trial[p] = alpha;
            const double cost = labeling_cost(pb, trial);
            if (cost < best - 1e-12 * std::max(1.0, std::abs(best))) {
                best = cost;
                labels = std::move(trial);
                improved = true;
            }
        }
    }
    return labels;
}

} // namespace ruled
