#include "ktnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ktnet {

NNResult nearest_brute(const std::vector<Point>& pts, const Point& q) {
    require(!pts.empty(), "nearest-neighbor query against an empty cloud");
    NNResult best{0, dist2(pts[0], q)};
    for (int i = 1; i < static_cast<int>(pts.size()); ++i) {
        const double d2 = dist2(pts[i], q);
        if (d2 < best.d2) best = {i, d2};
    }
    return best;
}

KdTree::KdTree(const std::vector<Point>& pts) : pts_(pts) {
    require(!pts_.empty(), "cannot build a KD-tree over an empty cloud");
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(2 * pts_.size() / 4 + 2);
    root_ = build(0, static_cast<int>(pts_.size()));
}

namespace {
constexpr int kLeafSize = 8;

inline double coord(const Point& p, int axis) {
    return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}
}  // namespace

int KdTree::build(int begin, int end) {
    Node node;
    if (end - begin <= kLeafSize) {
        node.begin = begin;
        node.end = end;
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }
    // Split on the widest axis at the median point.
    Point lo = pts_[order_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
        const Point& p = pts_[order_[i]];
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    const Point extent = hi - lo;
    int axis = 0;
    if (extent.y > coord(extent, axis)) axis = 1;
    if (extent.z > coord(extent, axis)) axis = 2;

    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         const double ca = coord(pts_[a], axis), cb = coord(pts_[b], axis);
                         return ca < cb || (ca == cb && a < b);
                     });
    node.axis = axis;
    node.split = coord(pts_[order_[mid]], axis);
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void KdTree::search(int node_id, const Point& q, NNResult& best) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
        for (int i = node.begin; i < node.end; ++i) {
            const int idx = order_[i];
            const double d2 = dist2(pts_[idx], q);
            if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) best = {idx, d2};
        }
        return;
    }
    const double diff = coord(q, node.axis) - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    search(near, q, best);
    // Equal plane distance may still hide an equal-distance lower index, so
    // only a strictly larger bound prunes.
    if (diff * diff <= best.d2) search(far, q, best);
}

NNResult KdTree::nearest(const Point& q) const {
    NNResult best{-1, std::numeric_limits<double>::infinity()};
    search(root_, q, best);
    return best;
}

double chamfer(const std::vector<Point>& p, const std::vector<Point>& q) {
    require(!p.empty() && !q.empty(), "chamfer distance needs two non-empty clouds");
    return ucd(p, q) + ucd(q, p);
}

double ucd(const std::vector<Point>& src, const std::vector<Point>& tgt) {
    require(!src.empty() && !tgt.empty(), "ucd needs two non-empty clouds");
    const KdTree tree(tgt);
    double acc = 0.0;
    for (const auto& p : src) acc += tree.nearest(p).d2;
    return acc / static_cast<double>(src.size());
}

double uhd(const std::vector<Point>& src, const std::vector<Point>& tgt) {
    require(!src.empty() && !tgt.empty(), "uhd needs two non-empty clouds");
    const KdTree tree(tgt);
    double worst = 0.0;
    for (const auto& p : src) worst = std::max(worst, tree.nearest(p).d2);
    return worst;
}

std::string emd_mode_name(EmdMode mode) { return mode == EmdMode::exact ? "exact" : "approx"; }

EmdMode emd_mode_from_name(const std::string& name) {
    if (name == "exact") return EmdMode::exact;
    if (name == "approx") return EmdMode::approx;
    throw std::invalid_argument(msg_cat("unknown EMD mode '", name, "' (exact or approx)"));
}

Assignment emd_exact(const std::vector<Point>& p, const std::vector<Point>& q) {
    require(p.size() == q.size(), "EMD needs equal-size clouds, got ", p.size(), " vs ",
            q.size());
    require(!p.empty(), "EMD of empty clouds");
    const int n = static_cast<int>(p.size());
    require(n <= 512, "emd_exact caps at 512 points (got ", n, "); use emd_approx");

    std::vector<double> cost(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost[i * n + j] = dist(p[i], q[j]);

    // Hungarian via shortest augmenting paths with potentials (1-indexed).
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }

    Assignment a;
    a.perm.assign(n, -1);
    for (int j = 1; j <= n; ++j) a.perm[match[j] - 1] = j - 1;
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[i * n + a.perm[i]];
    a.cost = total / static_cast<double>(n);
    return a;
}

Assignment emd_approx(const std::vector<Point>& p, const std::vector<Point>& q, double epsilon) {
    require(p.size() == q.size(), "EMD needs equal-size clouds, got ", p.size(), " vs ",
            q.size());
    require(!p.empty(), "EMD of empty clouds");
    require(epsilon > 0.0, "emd_approx needs epsilon > 0, got ", epsilon);
    const int n = static_cast<int>(p.size());

    std::vector<double> cost(static_cast<size_t>(n) * n);
    double cmax = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double d = dist(p[i], q[j]);
            cost[i * n + j] = d;
            cmax = std::max(cmax, d);
        }
    if (cmax == 0.0) {  // all points coincide; identity is optimal
        Assignment a;
        a.perm.resize(n);
        std::iota(a.perm.begin(), a.perm.end(), 0);
        a.cost = 0.0;
        return a;
    }

    // Forward auction with epsilon scaling. Prices persist across rounds;
    // the final eps puts the matched total within n*eps of optimal.
    const double eps_final = cmax * std::min(epsilon, 1e-3) / static_cast<double>(n + 1);
    double eps = cmax / 4.0;
    std::vector<double> price(n, 0.0);
    std::vector<int> owner(n);    // object -> person
    std::vector<int> assigned(n); // person -> object
    const int64_t bid_cap = 8LL * 1000 * 1000 * 100;  // hard stop for the divergence guard
    int64_t bids = 0;

    bool last_round = false;
    while (true) {
        if (eps <= eps_final) {
            eps = eps_final;
            last_round = true;
        }
        std::fill(owner.begin(), owner.end(), -1);
        std::fill(assigned.begin(), assigned.end(), -1);
        std::vector<int> queue(n);
        std::iota(queue.begin(), queue.end(), 0);
        size_t head = 0;
        std::vector<int> spill;
        while (head < queue.size() || !spill.empty()) {
            if (head == queue.size()) {
                queue.swap(spill);
                spill.clear();
                head = 0;
            }
            const int person = queue[head++];
            ensure(++bids <= bid_cap, "auction assignment did not converge after ", bids,
                   " bids (eps=", eps, ")");
            // Best and second-best net value for this person.
            const double* row = cost.data() + static_cast<size_t>(person) * n;
            int best_j = -1;
            double best_v = -std::numeric_limits<double>::infinity();
            double second_v = best_v;
            for (int j = 0; j < n; ++j) {
                const double v = -row[j] - price[j];
                if (v > best_v) {
                    second_v = best_v;
                    best_v = v;
                    best_j = j;
                } else if (v > second_v) {
                    second_v = v;
                }
            }
            if (n == 1) second_v = best_v;  // degenerate: no competing object
            price[best_j] += best_v - second_v + eps;
            const int displaced = owner[best_j];
            owner[best_j] = person;
            assigned[person] = best_j;
            if (displaced >= 0) {
                assigned[displaced] = -1;
                spill.push_back(displaced);
            }
        }
        if (last_round) break;
        eps /= 5.0;
    }

    Assignment a;
    a.perm = assigned;
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[static_cast<size_t>(i) * n + a.perm[i]];
    a.cost = total / static_cast<double>(n);
    return a;
}

Tensor ucd_loss(const std::vector<Point>& src, const Tensor& pred) {
    require(!src.empty(), "ucd_loss needs a non-empty source cloud");
    require(pred.rank() == 2 && pred.dim(1) == 3, "ucd_loss prediction must be [N,3], got ",
            shape_str(pred.shape()));
    const int64_t n_pred = pred.dim(0);
    std::vector<Point> pts(static_cast<size_t>(n_pred));
    const auto& pv = pred.values();
    for (int64_t i = 0; i < n_pred; ++i) pts[i] = {pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]};

    const KdTree tree(pts);
    std::vector<int> match(src.size());
    double acc = 0.0;
    for (size_t s = 0; s < src.size(); ++s) {
        const NNResult nn = tree.nearest(src[s]);
        match[s] = nn.index;
        acc += nn.d2;
    }
    const double inv = 1.0 / static_cast<double>(src.size());

    // Graph node with the matched indices frozen for the backward pass.
    struct Capture {
        std::vector<Point> src;
        std::vector<int> match;
        double inv;
    };
    auto cap = std::make_shared<Capture>(Capture{src, std::move(match), inv});
    std::vector<double> value{acc * inv};
    if (grad_enabled() && pred.requires_grad()) {
        auto node = std::make_shared<TensorNode>();
        node->shape = {1};
        node->data = value;
        node->requires_grad = true;
        node->parents = {pred.handle()};
        node->backprop = [cap](const TensorNode& self, const std::vector<double>& adj,
                               const std::vector<std::vector<double>*>& padj) {
            if (!padj[0]) return;
            const auto& pv = self.parents[0]->data;
            auto& dp = *padj[0];
            for (size_t s = 0; s < cap->src.size(); ++s) {
                const int j = cap->match[s];
                const Point q{pv[j * 3], pv[j * 3 + 1], pv[j * 3 + 2]};
                const Point g = (q - cap->src[s]) * (2.0 * cap->inv * adj[0]);
                dp[j * 3] += g.x;
                dp[j * 3 + 1] += g.y;
                dp[j * 3 + 2] += g.z;
            }
        };
        return Tensor(std::move(node));
    }
    return Tensor::leaf({1}, value);
}

Tensor emd_loss(const std::vector<Point>& target, const Tensor& pred, EmdMode mode,
                double epsilon) {
    require(pred.rank() == 2 && pred.dim(1) == 3, "emd_loss prediction must be [N,3], got ",
            shape_str(pred.shape()));
    const int64_t n_pred = pred.dim(0);
    require(static_cast<int64_t>(target.size()) == n_pred, "emd_loss needs equal sizes, got ",
            target.size(), " target vs ", n_pred, " predicted points");
    std::vector<Point> pts(static_cast<size_t>(n_pred));
    const auto& pv = pred.values();
    for (int64_t i = 0; i < n_pred; ++i) pts[i] = {pv[i * 3], pv[i * 3 + 1], pv[i * 3 + 2]};

    const Assignment assignment = mode == EmdMode::exact ? emd_exact(target, pts)
                                                         : emd_approx(target, pts, epsilon);
    struct Capture {
        std::vector<Point> target;
        std::vector<int> perm;
        double inv;
    };
    auto cap = std::make_shared<Capture>(
        Capture{target, assignment.perm, 1.0 / static_cast<double>(n_pred)});
    std::vector<double> value{assignment.cost};

    if (grad_enabled() && pred.requires_grad()) {
        auto node = std::make_shared<TensorNode>();
        node->shape = {1};
        node->data = value;
        node->requires_grad = true;
        node->parents = {pred.handle()};
        node->backprop = [cap](const TensorNode& self, const std::vector<double>& adj,
                               const std::vector<std::vector<double>*>& padj) {
            if (!padj[0]) return;
            const auto& pv = self.parents[0]->data;
            auto& dp = *padj[0];
            for (size_t i = 0; i < cap->target.size(); ++i) {
                const int j = cap->perm[i];
                const Point q{pv[j * 3], pv[j * 3 + 1], pv[j * 3 + 2]};
                const Point diff = q - cap->target[i];
                const double d = diff.norm();
                if (d <= 0.0) continue;  // matched exactly; subgradient 0
                const Point g = diff * (cap->inv * adj[0] / d);
                dp[j * 3] += g.x;
                dp[j * 3 + 1] += g.y;
                dp[j * 3 + 2] += g.z;
            }
        };
        return Tensor(std::move(node));
    }
    return Tensor::leaf({1}, value);
}

MetricReport::MetricReport(std::vector<std::string> metric_names)
    : metrics_(std::move(metric_names)) {
    require(!metrics_.empty(), "metric report needs at least one metric");
}

size_t MetricReport::metric_index(const std::string& metric) const {
    for (size_t i = 0; i < metrics_.size(); ++i)
        if (metrics_[i] == metric) return i;
    throw std::invalid_argument(msg_cat("metric '", metric, "' not in report"));
}

void MetricReport::add_sample(const std::string& category, const std::vector<double>& values) {
    require(values.size() == metrics_.size(), "metric sample has ", values.size(),
            " values, report expects ", metrics_.size());
    auto& acc = per_category_[category];
    if (acc.sum.empty()) acc.sum.assign(metrics_.size(), 0.0);
    for (size_t i = 0; i < values.size(); ++i) acc.sum[i] += values[i];
    acc.count += 1;
}

double MetricReport::category_mean(const std::string& category, const std::string& metric) const {
    auto it = per_category_.find(category);
    require(it != per_category_.end(), "no samples for category '", category, "'");
    return it->second.sum[metric_index(metric)] / static_cast<double>(it->second.count);
}

double MetricReport::average(const std::string& metric) const {
    require(!per_category_.empty(), "metric report has no samples");
    const size_t mi = metric_index(metric);
    double acc = 0.0;
    for (const auto& [cat, a] : per_category_) acc += a.sum[mi] / static_cast<double>(a.count);
    return acc / static_cast<double>(per_category_.size());
}

std::string MetricReport::to_csv() const {
    std::string out = "category";
    for (const auto& m : metrics_) out += "," + m;
    out += "\n";
    for (const auto& [cat, acc] : per_category_) {
        out += cat;
        for (size_t i = 0; i < metrics_.size(); ++i)
            out += "," + format_double(acc.sum[i] / static_cast<double>(acc.count));
        out += "\n";
    }
    if (!per_category_.empty()) {
        out += "Average";
        for (const auto& m : metrics_) out += "," + format_double(average(m));
        out += "\n";
    }
    return out;
}

}  // namespace ktnet
