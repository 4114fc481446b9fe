#pragma once

// Binary pairwise submodular energies and their exact minimization by
// s-t min-cut. The max-flow uses the Boykov-Kolmogorov search-tree strategy
// (two trees grown from the terminals, reused across augmentations).

#include <clickseg/error.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <vector>

namespace clickseg {

struct UnaryCost {
    double label0 = 0.0;
    double label1 = 0.0;
};

struct PairwiseTerm {
    int i = 0;
    int j = 0;
    double weight = 0.0; // paid iff labels differ
};

/// E(L) = sum_i unary[i](L_i) + sum_(i,j) weight * [L_i != L_j]
struct EnergyProblem {
    std::vector<UnaryCost> unary;
    std::vector<PairwiseTerm> pairwise;

    int n_nodes() const { return static_cast<int>(unary.size()); }

    int add_node(double cost0, double cost1)
    {
        unary.push_back({cost0, cost1});
        return n_nodes() - 1;
    }

    void add_edge(int i, int j, double weight) { pairwise.push_back({i, j, weight}); }
};

using Labeling = std::vector<std::uint8_t>;

struct Minimum {
    Labeling labeling;
    double energy = 0.0;
    double max_flow = 0.0; // flow value; max_flow + offset == energy
    double offset = 0.0;   // constant removed from the unaries before the cut
};

inline void validate(const EnergyProblem& problem)
{
    const int n = problem.n_nodes();
    for (const auto& u : problem.unary) {
        if (!(u.label0 >= 0.0) || !(u.label1 >= 0.0) || !std::isfinite(u.label0) || !std::isfinite(u.label1))
            throw Error(Errc::negative_cost, "unary costs must be finite and non-negative");
    }
    for (const auto& e : problem.pairwise) {
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
            throw Error(Errc::not_submodular, "pairwise weight must be finite and non-negative");
        if (e.i == e.j)
            throw Error(Errc::invalid_argument, "pairwise term connects a node to itself");
        if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n)
            throw Error(Errc::shape_mismatch, "pairwise term references a node out of range");
    }
}

inline double evaluate(const EnergyProblem& problem, std::span<const std::uint8_t> labeling)
{
    if (labeling.size() != problem.unary.size())
        throw Error(Errc::shape_mismatch, "labeling length does not match node count");
    double e = 0.0;
    for (std::size_t i = 0; i < labeling.size(); ++i)
        e += labeling[i] ? problem.unary[i].label1 : problem.unary[i].label0;
    for (const auto& p : problem.pairwise) {
        if (labeling[p.i] != labeling[p.j])
            e += p.weight;
    }
    return e;
}

namespace detail {

/// Max-flow on a graph with real capacities. Residual capacities at or
/// below `eps` count as saturated.
class BkGraph {
public:
    static constexpr double eps = 1e-12;

    explicit BkGraph(int n_nodes) : nodes_(n_nodes) {}

    void add_tweights(int i, double cap_source, double cap_sink)
    {
        double delta = nodes_[i].tr_cap;
        if (delta > 0)
            cap_source += delta;
        else
            cap_sink -= delta;
        flow_ += std::min(cap_source, cap_sink);
        nodes_[i].tr_cap = cap_source - cap_sink;
    }

    void add_edge(int i, int j, double cap, double rev_cap)
    {
        const int a = static_cast<int>(arcs_.size());
        arcs_.push_back({j, nodes_[i].first, a + 1, cap});
        arcs_.push_back({i, nodes_[j].first, a, rev_cap});
        nodes_[i].first = a;
        nodes_[j].first = a + 1;
    }

    double maxflow()
    {
        init();
        int current = none;
        for (;;) {
            int i = current;
            if (i != none && nodes_[i].parent == none)
                i = none;
            if (i == none) {
                i = next_active();
                if (i == none)
                    break;
            }

            int middle = none;
            Node& ni = nodes_[i];
            if (!ni.is_sink) {
                for (int a = ni.first; a != none; a = arcs_[a].next) {
                    if (arcs_[a].r_cap <= eps)
                        continue;
                    const int j = arcs_[a].head;
                    Node& nj = nodes_[j];
                    if (nj.parent == none) {
                        nj.is_sink = false;
                        nj.parent = arcs_[a].sister;
                        nj.ts = ni.ts;
                        nj.dist = ni.dist + 1;
                        set_active(j);
                    } else if (nj.is_sink) {
                        middle = a;
                        break;
                    } else if (nj.ts <= ni.ts && nj.dist > ni.dist) {
                        nj.parent = arcs_[a].sister;
                        nj.ts = ni.ts;
                        nj.dist = ni.dist + 1;
                    }
                }
            } else {
                for (int a = ni.first; a != none; a = arcs_[a].next) {
                    if (arcs_[arcs_[a].sister].r_cap <= eps)
                        continue;
                    const int j = arcs_[a].head;
                    Node& nj = nodes_[j];
                    if (nj.parent == none) {
                        nj.is_sink = true;
                        nj.parent = arcs_[a].sister;
                        nj.ts = ni.ts;
                        nj.dist = ni.dist + 1;
                        set_active(j);
                    } else if (!nj.is_sink) {
                        middle = arcs_[a].sister;
                        break;
                    } else if (nj.ts <= ni.ts && nj.dist > ni.dist) {
                        nj.parent = arcs_[a].sister;
                        nj.ts = ni.ts;
                        nj.dist = ni.dist + 1;
                    }
                }
            }

            ++time_;
            if (middle != none) {
                current = i;
                augment(middle);
                while (!orphans_.empty()) {
                    const int o = orphans_.front();
                    orphans_.pop_front();
                    if (nodes_[o].is_sink)
                        process_orphan<true>(o);
                    else
                        process_orphan<false>(o);
                }
            } else {
                current = none;
            }
        }
        return flow_;
    }

    /// Nodes reachable from the source through residual arcs. This is the
    /// smallest source set over all minimum cuts.
    std::vector<std::uint8_t> source_reachable() const
    {
        std::vector<std::uint8_t> seen(nodes_.size(), 0);
        std::vector<int> stack;
        for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
            if (nodes_[i].tr_cap > eps) {
                seen[i] = 1;
                stack.push_back(i);
            }
        }
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            for (int a = nodes_[i].first; a != none; a = arcs_[a].next) {
                const int j = arcs_[a].head;
                if (!seen[j] && arcs_[a].r_cap > eps) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        return seen;
    }

private:
    static constexpr int none = -1;
    static constexpr int terminal = -2;
    static constexpr int orphan = -3;
    static constexpr int infinite_dist = std::numeric_limits<int>::max();

    struct Arc {
        int head;
        int next;
        int sister;
        double r_cap;
    };

    struct Node {
        int first = none;
        int parent = none; // arc to the parent, or terminal / orphan / none
        bool is_sink = false;
        bool active = false;
        long ts = 0;
        int dist = 0;
        double tr_cap = 0.0; // >0: residual from source, <0: residual to sink
    };

    std::vector<Node> nodes_;
    std::vector<Arc> arcs_;
    std::deque<int> active_;
    std::deque<int> orphans_;
    double flow_ = 0.0;
    long time_ = 0;

    void set_active(int i)
    {
        if (!nodes_[i].active) {
            nodes_[i].active = true;
            active_.push_back(i);
        }
    }

    int next_active()
    {
        while (!active_.empty()) {
            const int i = active_.front();
            active_.pop_front();
            nodes_[i].active = false;
            if (nodes_[i].parent != none)
                return i;
        }
        return none;
    }

    void init()
    {
        active_.clear();
        orphans_.clear();
        time_ = 0;
        for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
            Node& n = nodes_[i];
            n.active = false;
            n.ts = 0;
            if (n.tr_cap > eps) {
                n.is_sink = false;
                n.parent = terminal;
                n.dist = 1;
                set_active(i);
            } else if (n.tr_cap < -eps) {
                n.is_sink = true;
                n.parent = terminal;
                n.dist = 1;
                set_active(i);
            } else {
                n.tr_cap = 0.0;
                n.parent = none;
            }
        }
    }

    void make_orphan_front(int i)
    {
        nodes_[i].parent = orphan;
        orphans_.push_front(i);
    }

    void make_orphan_rear(int i)
    {
        nodes_[i].parent = orphan;
        orphans_.push_back(i);
    }

    void augment(int middle)
    {
        double bottleneck = arcs_[middle].r_cap;

        // source tree
        int i = arcs_[arcs_[middle].sister].head;
        for (;;) {
            const int a = nodes_[i].parent;
            if (a == terminal)
                break;
            bottleneck = std::min(bottleneck, arcs_[arcs_[a].sister].r_cap);
            i = arcs_[a].head;
        }
        bottleneck = std::min(bottleneck, nodes_[i].tr_cap);

        // sink tree
        i = arcs_[middle].head;
        for (;;) {
            const int a = nodes_[i].parent;
            if (a == terminal)
                break;
            bottleneck = std::min(bottleneck, arcs_[a].r_cap);
            i = arcs_[a].head;
        }
        bottleneck = std::min(bottleneck, -nodes_[i].tr_cap);

        arcs_[arcs_[middle].sister].r_cap += bottleneck;
        arcs_[middle].r_cap -= bottleneck;
        if (arcs_[middle].r_cap <= eps)
            arcs_[middle].r_cap = 0.0;

        i = arcs_[arcs_[middle].sister].head;
        for (;;) {
            const int a = nodes_[i].parent;
            if (a == terminal)
                break;
            arcs_[a].r_cap += bottleneck;
            Arc& s = arcs_[arcs_[a].sister];
            s.r_cap -= bottleneck;
            if (s.r_cap <= eps) {
                s.r_cap = 0.0;
                make_orphan_front(i);
            }
            i = arcs_[a].head;
        }
        nodes_[i].tr_cap -= bottleneck;
        if (nodes_[i].tr_cap <= eps) {
            nodes_[i].tr_cap = 0.0;
            make_orphan_front(i);
        }

        i = arcs_[middle].head;
        for (;;) {
            const int a = nodes_[i].parent;
            if (a == terminal)
                break;
            arcs_[arcs_[a].sister].r_cap += bottleneck;
            arcs_[a].r_cap -= bottleneck;
            if (arcs_[a].r_cap <= eps) {
                arcs_[a].r_cap = 0.0;
                make_orphan_front(i);
            }
            i = arcs_[a].head;
        }
        nodes_[i].tr_cap += bottleneck;
        if (nodes_[i].tr_cap >= -eps) {
            nodes_[i].tr_cap = 0.0;
            make_orphan_front(i);
        }

        flow_ += bottleneck;
    }

    template <bool SinkSide>
    void process_orphan(int i)
    {
        int best_arc = none;
        int best_dist = infinite_dist;

        for (int a0 = nodes_[i].first; a0 != none; a0 = arcs_[a0].next) {
            const double cap = SinkSide ? arcs_[a0].r_cap : arcs_[arcs_[a0].sister].r_cap;
            if (cap <= eps)
                continue;
            int j = arcs_[a0].head;
            if (nodes_[j].is_sink != SinkSide || nodes_[j].parent == none)
                continue;

            // walk to the root to check the origin of j
            int d = 0;
            for (;;) {
                if (nodes_[j].ts == time_) {
                    d += nodes_[j].dist;
                    break;
                }
                const int a = nodes_[j].parent;
                ++d;
                if (a == terminal) {
                    nodes_[j].ts = time_;
                    nodes_[j].dist = 1;
                    break;
                }
                if (a == orphan) {
                    d = infinite_dist;
                    break;
                }
                j = arcs_[a].head;
            }

            if (d < infinite_dist) {
                if (d < best_dist) {
                    best_arc = a0;
                    best_dist = d;
                }
                for (j = arcs_[a0].head; nodes_[j].ts != time_; j = arcs_[nodes_[j].parent].head) {
                    nodes_[j].ts = time_;
                    nodes_[j].dist = d--;
                }
            }
        }

        nodes_[i].parent = best_arc;
        if (best_arc != none) {
            nodes_[i].ts = time_;
            nodes_[i].dist = best_dist + 1;
            return;
        }

        nodes_[i].parent = none;
        for (int a0 = nodes_[i].first; a0 != none; a0 = arcs_[a0].next) {
            const int j = arcs_[a0].head;
            const int a = nodes_[j].parent;
            if (nodes_[j].is_sink != SinkSide || a == none)
                continue;
            const double cap = SinkSide ? arcs_[a0].r_cap : arcs_[arcs_[a0].sister].r_cap;
            if (cap > eps)
                set_active(j);
            if (a != terminal && a != orphan && arcs_[a].head == i)
                make_orphan_rear(j);
        }
    }
};

} // namespace detail

/// Exact global minimum of a submodular binary energy. Label 1 is the source
/// side of the minimum cut; among multiple minimizers the one with the
/// fewest label-1 nodes (the lattice minimum) is returned.
inline Minimum minimize(const EnergyProblem& problem)
{
    validate(problem);
    const int n = problem.n_nodes();
    detail::BkGraph graph(n);

    double offset = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& u = problem.unary[i];
        const double base = std::min(u.label0, u.label1);
        offset += base;
        // source side (label 1) cuts i->sink, sink side (label 0) cuts source->i
        graph.add_tweights(i, u.label0 - base, u.label1 - base);
    }
    for (const auto& p : problem.pairwise) {
        if (p.weight > 0.0)
            graph.add_edge(p.i, p.j, p.weight, p.weight);
    }

    Minimum result;
    result.max_flow = graph.maxflow();
    result.offset = offset;
    result.labeling = graph.source_reachable();
    result.energy = evaluate(problem, result.labeling);
    return result;
}

} // namespace clickseg
