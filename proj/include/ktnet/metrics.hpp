#ifndef KTNET_METRICS_HPP
#define KTNET_METRICS_HPP

#include <map>
#include <string>
#include <vector>

#include "ktnet/pointcloud.hpp"
#include "ktnet/tensor.hpp"

namespace ktnet {

struct NNResult {
    int index = -1;
    double d2 = 0.0;
};

// Linear scan; ties resolved to the lowest index. Reference for the tree.
NNResult nearest_brute(const std::vector<Point>& pts, const Point& q);

// Balanced KD-tree over a fixed point set. Queries return the same (d2,
// index) pair as nearest_brute: equal-distance boxes are never pruned and
// ties break to the lowest point index.
class KdTree {
public:
    explicit KdTree(const std::vector<Point>& pts);
    NNResult nearest(const Point& q) const;
    size_t size() const { return pts_.size(); }

private:
    struct Node {
        int axis = -1;       // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
    };
    int build(int begin, int end);
    void search(int node, const Point& q, NNResult& best) const;

    std::vector<Point> pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Eq.-9-style Chamfer: mean squared nearest-neighbor distance in both
// directions.
double chamfer(const std::vector<Point>& p, const std::vector<Point>& q);

// One-sided mean squared nearest-neighbor distance from src into tgt.
double ucd(const std::vector<Point>& src, const std::vector<Point>& tgt);

// One-sided worst-case squared nearest-neighbor distance (squared form).
double uhd(const std::vector<Point>& src, const std::vector<Point>& tgt);

struct Assignment {
    std::vector<int> perm;  // perm[i] = index into Q matched to P[i]; a bijection
    double cost = 0.0;      // mean Euclidean distance over matched pairs
};

enum class EmdMode { exact, approx };

std::string emd_mode_name(EmdMode mode);
EmdMode emd_mode_from_name(const std::string& name);

// Hungarian algorithm (O(N^3) shortest augmenting paths). |P| = |Q| <= 512.
Assignment emd_exact(const std::vector<Point>& p, const std::vector<Point>& q);

// Epsilon-scaling auction. Guarantee: total matched distance exceeds the
// optimum by at most N * eps_abs, with eps_abs = C * min(epsilon, 1e-3) /
// (N + 1) and C the largest pairwise distance, so the normalized cost is
// within min(epsilon, 1e-3) * C of exact.
Assignment emd_approx(const std::vector<Point>& p, const std::vector<Point>& q, double epsilon);

// ---- differentiable heads (predicted cloud as Tensor [N,3]) ---------------

// Mean squared distance from each src point to its nearest predicted point;
// gradient flows to the selected predicted points only.
Tensor ucd_loss(const std::vector<Point>& src, const Tensor& pred);

// Mean Euclidean matched distance under the optimal (or auction)
// assignment, differentiated with the assignment held fixed.
Tensor emd_loss(const std::vector<Point>& target, const Tensor& pred, EmdMode mode,
                double epsilon = 1e-3);

// ---- evaluation report ------------------------------------------------------

// Per-category means plus an Average row over category means, serialized as
// CSV in the layout of the paper's result tables. Scale factors are part of
// the column names (cd_x1e4, ucd_x1e4, emd_x1e2, uhd_x1e2).
class MetricReport {
public:
    explicit MetricReport(std::vector<std::string> metric_names);

    void add_sample(const std::string& category, const std::vector<double>& values);

    double category_mean(const std::string& category, const std::string& metric) const;
    double average(const std::string& metric) const;  // mean of category means
    const std::vector<std::string>& metric_names() const { return metrics_; }

    std::string to_csv() const;

private:
    struct Accum {
        std::vector<double> sum;
        int64_t count = 0;
    };
    std::vector<std::string> metrics_;
    std::map<std::string, Accum> per_category_;
    size_t metric_index(const std::string& metric) const;
};

}  // namespace ktnet

#endif
