#include "parblock/depgraph.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace parblock {

namespace {

bool intersects(const std::set<Key>& a, const std::set<Key>& b) {
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib)
            ++ia;
        else if (*ib < *ia)
            ++ib;
        else
            return true;
    }
    return false;
}

}  // namespace

bool conflicts(const Operation& first, const Operation& second) {
    return intersects(first.read_set, second.write_set) || intersects(first.write_set, second.read_set) ||
           intersects(first.write_set, second.write_set);
}

bool conflicts(const Transaction& first, const Transaction& second) { return conflicts(first.op, second.op); }

DependencyGraph::DependencyGraph(std::vector<TxnId> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
    pre_.resize(nodes_.size());
    suc_.resize(nodes_.size());
    for (auto [from, to] : edges_) {
        if (from >= to || to >= nodes_.size())
            throw std::invalid_argument("dependency edge must point forward within the block");
        suc_[from].push_back(to);
        pre_[to].push_back(from);
    }
    for (auto& p : pre_) std::sort(p.begin(), p.end());
}

bool DependencyGraph::has_edge(Index from, Index to) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

std::set<std::pair<TxnId, TxnId>> DependencyGraph::edge_ids() const {
    std::set<std::pair<TxnId, TxnId>> out;
    for (auto [from, to] : edges_) out.emplace(nodes_[from], nodes_[to]);
    return out;
}

std::vector<DependencyGraph::Index> DependencyGraph::topological_order() const {
    // Kahn's algorithm; the smallest ready index first, so the result is the
    // block order whenever the graph allows it.
    std::vector<std::size_t> indegree(size());
    for (Index i = 0; i < size(); ++i) indegree[i] = pre_[i].size();
    std::set<Index> ready;
    for (Index i = 0; i < size(); ++i)
        if (indegree[i] == 0) ready.insert(i);
    std::vector<Index> order;
    order.reserve(size());
    while (!ready.empty()) {
        auto x = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(x);
        for (auto y : suc_[x])
            if (--indegree[y] == 0) ready.insert(y);
    }
    if (order.size() != size()) throw std::logic_error("dependency graph has a cycle");
    return order;
}

std::string DependencyGraph::to_dot(const std::vector<AppId>* app_of) const {
    std::ostringstream out;
    out << "digraph block {\n";
    for (Index i = 0; i < size(); ++i) {
        out << "  t" << i << " [label=\"" << i << ":" << nodes_[i].short_hex();
        if (app_of) out << "\\napp " << (*app_of)[i].value;
        out << "\"];\n";
    }
    for (auto [from, to] : edges_) out << "  t" << from << " -> t" << to << ";\n";
    out << "}\n";
    return out.str();
}

DependencyGraph build_graph(const std::vector<Operation>& ops, const std::vector<TxnId>& ids,
                            const GraphOptions& options) {
    using Index = DependencyGraph::Index;
    if (ops.size() != ids.size()) throw std::invalid_argument("operations and ids differ in length");

    // Per-key inverted index of earlier readers and writers. Scanning it for
    // each later transaction yields exactly the pairs an all-pairs check
    // would find.
    struct Access {
        std::vector<Index> readers;
        std::vector<Index> writers;
    };
    std::unordered_map<Key, Access> index;
    std::vector<DependencyGraph::Edge> edges;
    std::vector<Index> seen(ops.size(), static_cast<Index>(-1));

    for (Index j = 0; j < ops.size(); ++j) {
        auto add = [&](Index i) {
            if (seen[i] != j) {
                seen[i] = j;
                edges.emplace_back(i, j);
            }
        };
        const auto& op = ops[j];
        for (const auto& k : op.read_set) {
            auto it = index.find(k);
            if (it == index.end()) continue;
            for (auto i : it->second.writers) add(i);
        }
        for (const auto& k : op.write_set) {
            auto it = index.find(k);
            if (it == index.end()) continue;
            for (auto i : it->second.readers) add(i);
            for (auto i : it->second.writers) add(i);
        }
        for (const auto& k : op.read_set) index[k].readers.push_back(j);
        for (const auto& k : op.write_set) index[k].writers.push_back(j);
    }

    DependencyGraph g(ids, std::move(edges));
    if (options.transitive_reduction) return transitive_reduction(g);
    return g;
}

DependencyGraph build_graph(const Block& block, const GraphOptions& options) {
    std::vector<Operation> ops;
    std::vector<TxnId> ids;
    ops.reserve(block.txns.size());
    ids.reserve(block.txns.size());
    for (const auto& t : block.txns) {
        ops.push_back(t.op);
        ids.push_back(t.id);
    }
    return build_graph(ops, ids, options);
}

DependencyGraph transitive_reduction(const DependencyGraph& g) {
    using Index = DependencyGraph::Index;
    const std::size_t n = g.size();
    const std::size_t words = (n + 63) / 64;
    // reach[x] = nodes reachable from x via one or more edges.
    std::vector<std::vector<std::uint64_t>> reach(n, std::vector<std::uint64_t>(words, 0));
    auto test = [](const std::vector<std::uint64_t>& bits, Index i) { return (bits[i / 64] >> (i % 64)) & 1U; };
    auto set = [](std::vector<std::uint64_t>& bits, Index i) { bits[i / 64] |= std::uint64_t{1} << (i % 64); };

    std::vector<DependencyGraph::Edge> kept;
    for (Index x = static_cast<Index>(n); x-- > 0;) {
        std::vector<std::uint64_t> covered(words, 0);
        for (auto y : g.suc(x)) {  // ascending, hence in topological order
            if (!test(covered, y)) kept.emplace_back(x, y);
            set(covered, y);
            for (std::size_t w = 0; w < words; ++w) covered[w] |= reach[y][w];
        }
        reach[x] = std::move(covered);
    }
    return DependencyGraph(g.nodes(), std::move(kept));
}

std::set<DependencyGraph::Index> ready_set(const DependencyGraph& g, const std::set<DependencyGraph::Index>& done,
                                           const std::set<DependencyGraph::Index>& mine) {
    std::set<DependencyGraph::Index> out;
    for (auto x : mine) {
        if (done.contains(x)) continue;
        const auto& pre = g.pre(x);
        if (std::all_of(pre.begin(), pre.end(), [&](auto p) { return done.contains(p); })) out.insert(x);
    }
    return out;
}

bool cross_app_successor(const DependencyGraph& g, DependencyGraph::Index x, const std::vector<AppId>& app_of) {
    const auto& suc = g.suc(x);
    return std::any_of(suc.begin(), suc.end(), [&](auto y) { return app_of[y] != app_of[x]; });
}

void encode(Writer& w, const DependencyGraph& g) {
    w.u32(static_cast<std::uint32_t>(g.size()));
    for (const auto& id : g.nodes()) w.digest(id);
    w.u32(static_cast<std::uint32_t>(g.edges().size()));
    for (auto [from, to] : g.edges()) w.u32(from).u32(to);
}

DependencyGraph decode_graph(Reader& r) {
    auto n = r.count(32);
    std::vector<TxnId> nodes;
    nodes.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) nodes.push_back(r.digest());
    auto m = r.count(8);
    std::vector<DependencyGraph::Edge> edges;
    edges.reserve(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        auto from = r.u32();
        auto to = r.u32();
        if (!edges.empty() && !(edges.back() < DependencyGraph::Edge{from, to}))
            throw DecodeError("edge list not sorted");
        edges.emplace_back(from, to);
    }
    try {
        return DependencyGraph(std::move(nodes), std::move(edges));
    } catch (const std::invalid_argument& e) {
        throw DecodeError(e.what());
    }
}

}  // namespace parblock
