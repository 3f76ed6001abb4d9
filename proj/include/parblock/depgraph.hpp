#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "parblock/codec.hpp"
#include "parblock/types.hpp"

namespace parblock {

// Ordering dependency between an earlier transaction `first` and a later one
// `second`: they touch a common key and at least one side writes it.
bool conflicts(const Transaction& first, const Transaction& second);
bool conflicts(const Operation& first, const Operation& second);

// Directed acyclic graph over a block's transactions. Nodes are addressed by
// their 0-based block index; every edge points forward in block order.
class DependencyGraph {
  public:
    using Index = std::uint32_t;
    using Edge = std::pair<Index, Index>;

    DependencyGraph() = default;
    DependencyGraph(std::vector<TxnId> nodes, std::vector<Edge> edges);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<TxnId>& nodes() const { return nodes_; }
    // Sorted, duplicate-free.
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Index>& pre(Index x) const { return pre_[x]; }
    const std::vector<Index>& suc(Index x) const { return suc_[x]; }
    bool has_edge(Index from, Index to) const;

    std::set<std::pair<TxnId, TxnId>> edge_ids() const;

    // Any topological sort; block order is always one.
    std::vector<Index> topological_order() const;

    std::string to_dot(const std::vector<AppId>* app_of = nullptr) const;

    bool operator==(const DependencyGraph& other) const {
        return nodes_ == other.nodes_ && edges_ == other.edges_;
    }

  private:
    std::vector<TxnId> nodes_;
    std::vector<Edge> edges_;
    std::vector<std::vector<Index>> pre_;
    std::vector<std::vector<Index>> suc_;
};

struct GraphOptions {
    bool transitive_reduction = false;
};

DependencyGraph build_graph(const Block& block, const GraphOptions& options = {});
DependencyGraph build_graph(const std::vector<Operation>& ops, const std::vector<TxnId>& ids,
                            const GraphOptions& options = {});

// Preserves reachability, drops implied edges.
DependencyGraph transitive_reduction(const DependencyGraph& g);

// Number of pairwise comparisons a literal all-pairs builder performs for n
// transactions; the simulator charges graph construction by this count.
inline std::uint64_t graph_pair_checks(std::size_t n) {
    return n < 2 ? 0 : static_cast<std::uint64_t>(n) * (n - 1) / 2;
}

// {x in mine \ done | Pre(x) subset of done}
std::set<DependencyGraph::Index> ready_set(const DependencyGraph& g, const std::set<DependencyGraph::Index>& done,
                                           const std::set<DependencyGraph::Index>& mine);

// True iff some successor of x belongs to a different application.
bool cross_app_successor(const DependencyGraph& g, DependencyGraph::Index x, const std::vector<AppId>& app_of);

void encode(Writer& w, const DependencyGraph& g);
DependencyGraph decode_graph(Reader& r);

}  // namespace parblock
