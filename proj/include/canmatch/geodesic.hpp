#pragma once

// Graph geodesics on a point cloud: a symmetric kNN graph with Euclidean edge
// weights (mesh edges when faces are present) and on-demand Dijkstra rows.

#include <limits>
#include <mutex>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "canmatch/errors.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

class GeodesicField {
public:
    static constexpr int kDefaultKnn = 8;
    static constexpr int kDiameterSources = 16;

    explicit GeodesicField(const PointCloud& p, int knn = kDefaultKnn) : shape_id_(p.label), n_(p.size()) {
        if (p.faces.empty())
            build_knn_graph(p.coords, knn);
        else
            build_mesh_graph(p.coords, p.faces);
        check_connected();
    }

    int size() const { return n_; }
    const std::string& shape_id() const { return shape_id_; }

    // Shortest-path distances from `source` to every vertex. Rows are cached;
    // concurrent readers are serialized by an internal lock.
    const std::vector<double>& row(int source) const {
        if (source < 0 || source >= n_) throw IndexError("GeodesicField: source out of range");
        std::lock_guard<std::mutex> lock(mu_);
        auto it = rows_.find(source);
        if (it == rows_.end()) it = rows_.emplace(source, dijkstra(source)).first;
        return it->second;
    }

    double distance(int i, int j) const { return row(i)[static_cast<std::size_t>(j)]; }

    // Undirected adjacency (neighbor, Euclidean weight) per vertex.
    const std::vector<std::vector<std::pair<int, double>>>& adjacency() const { return adj_; }

    // Geodesic diameter estimate: the largest distance seen from up to
    // kDiameterSources evenly spaced source vertices.
    double diameter() const {
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (diameter_ >= 0.0) return diameter_;
        }
        double d = 0.0;
        int m = std::min(n_, kDiameterSources);
        for (int s = 0; s < m; ++s) {
            int src = static_cast<int>(static_cast<long long>(s) * n_ / m);
            const auto& r = row(src);
            for (double v : r) d = std::max(d, v);
        }
        std::lock_guard<std::mutex> lock(mu_);
        diameter_ = d;
        return diameter_;
    }

private:
    void add_edge(int i, int j, double w) {
        adj_[static_cast<std::size_t>(i)].emplace_back(j, w);
        adj_[static_cast<std::size_t>(j)].emplace_back(i, w);
    }

    void build_knn_graph(const Mat& coords, int knn) {
        if (knn < 1) throw ConfigError("GeodesicField: knn must be positive");
        adj_.assign(static_cast<std::size_t>(n_), {});
        const int k = std::min(knn, n_ - 1);
        std::vector<std::pair<double, int>> cand(static_cast<std::size_t>(n_ - 1));
        for (int i = 0; i < n_; ++i) {
            cand.clear();
            for (int j = 0; j < n_; ++j) {
                if (j == i) continue;
                cand.emplace_back((coords.row(i) - coords.row(j)).norm(), j);
            }
            std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
            // symmetric closure: i-j enters whenever either end ranks the other
            for (int c = 0; c < k; ++c)
                add_edge_once(i, cand[static_cast<std::size_t>(c)].second,
                              cand[static_cast<std::size_t>(c)].first);
        }
    }

    bool has_edge(int i, int j) const {
        for (const auto& [nb, w] : adj_[static_cast<std::size_t>(i)])
            if (nb == j) return true;
        return false;
    }

    void add_edge_once(int i, int j, double w) {
        if (!has_edge(i, j)) add_edge(i, j, w);
    }

    void build_mesh_graph(const Mat& coords, const std::vector<std::array<int, 3>>& faces) {
        adj_.assign(static_cast<std::size_t>(n_), {});
        for (const auto& f : faces) {
            const int e[3][2] = {{f[0], f[1]}, {f[1], f[2]}, {f[2], f[0]}};
            for (const auto& ed : e) {
                double w = (coords.row(ed[0]) - coords.row(ed[1])).norm();
                add_edge_once(ed[0], ed[1], w);
            }
        }
    }

    void check_connected() const {
        std::vector<int> comp(static_cast<std::size_t>(n_), -1);
        std::vector<int> sizes;
        for (int s = 0; s < n_; ++s) {
            if (comp[static_cast<std::size_t>(s)] >= 0) continue;
            int id = static_cast<int>(sizes.size());
            sizes.push_back(0);
            std::vector<int> stack{s};
            comp[static_cast<std::size_t>(s)] = id;
            while (!stack.empty()) {
                int v = stack.back();
                stack.pop_back();
                ++sizes[static_cast<std::size_t>(id)];
                for (const auto& [nb, w] : adj_[static_cast<std::size_t>(v)]) {
                    if (comp[static_cast<std::size_t>(nb)] < 0) {
                        comp[static_cast<std::size_t>(nb)] = id;
                        stack.push_back(nb);
                    }
                }
            }
        }
        if (sizes.size() > 1) {
            std::string msg = "GeodesicField: graph is disconnected, component sizes [";
            for (std::size_t i = 0; i < sizes.size(); ++i)
                msg += (i ? ", " : "") + std::to_string(sizes[i]);
            throw DataError(msg + "]");
        }
    }

    std::vector<double> dijkstra(int source) const {
        std::vector<double> dist(static_cast<std::size_t>(n_), std::numeric_limits<double>::infinity());
        using Item = std::pair<double, int>;
        std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
        dist[static_cast<std::size_t>(source)] = 0.0;
        pq.emplace(0.0, source);
        while (!pq.empty()) {
            auto [d, v] = pq.top();
            pq.pop();
            if (d > dist[static_cast<std::size_t>(v)]) continue;
            for (const auto& [nb, w] : adj_[static_cast<std::size_t>(v)]) {
                double nd = d + w;
                if (nd < dist[static_cast<std::size_t>(nb)]) {
                    dist[static_cast<std::size_t>(nb)] = nd;
                    pq.emplace(nd, nb);
                }
            }
        }
        return dist;
    }

    std::string shape_id_;
    int n_ = 0;
    std::vector<std::vector<std::pair<int, double>>> adj_;
    mutable std::mutex mu_;
    mutable std::unordered_map<int, std::vector<double>> rows_;
    mutable double diameter_ = -1.0;
};

}  // namespace canmatch
