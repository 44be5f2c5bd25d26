#ifndef KTNET_POINTCLOUD_HPP
#define KTNET_POINTCLOUD_HPP

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ktnet/common.hpp"

namespace ktnet {

struct Point {
    double x = 0.0, y = 0.0, z = 0.0;

    Point operator+(const Point& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Point operator-(const Point& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Point operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Point& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
};

inline double dist2(const Point& a, const Point& b) { return (a - b).norm2(); }
inline double dist(const Point& a, const Point& b) { return std::sqrt(dist2(a, b)); }

enum class CloudRole { complete, partial, predicted };

std::string role_name(CloudRole role);
CloudRole role_from_name(const std::string& name);

struct PointCloud {
    std::vector<Point> points;
    std::string category;
    CloudRole role = CloudRole::complete;
    std::string instance;  // underlying shape instance id, "" if unknown

    size_t size() const { return points.size(); }
};

enum class CloudFormat { xyz, ply_ascii };

CloudFormat format_from_path(const std::filesystem::path& path);

// xyz: one "x y z" line per point, '#' comments ignored.
// ply_ascii: the minimal ASCII subset with element vertex and x/y/z floats.
PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);

struct NormalizeResult {
    PointCloud cloud;
    Point centroid;  // of the input
    double scale;    // max norm after centering; original = normalized * scale + centroid
};

// Centroid to origin, then max point norm scaled to 1. Errors when all
// points coincide.
NormalizeResult normalize(const PointCloud& cloud);

// ---- synthetic primitives -------------------------------------------------

enum class PrimitiveKind { box_table, box_chair, ellipsoid_lamp };

PrimitiveKind primitive_for_category(const std::string& category);
std::string category_for_primitive(PrimitiveKind kind);

struct Box {
    Point lo, hi;  // axis-aligned, hi > lo componentwise
};

struct Ellipsoid {
    Point center;
    Point radii;  // semi-axes, all positive
};

struct PrimitiveShape {
    std::vector<Box> boxes;
    std::vector<Ellipsoid> ellipsoids;
    size_t part_count() const { return boxes.size() + ellipsoids.size(); }
};

double box_area(const Box& b);
// Lat-long midpoint quadrature of the surface element; ~1e-9 relative.
double ellipsoid_area(const Ellipsoid& e);

// Randomized part dimensions drawn from per-kind ranges.
PrimitiveShape make_primitive_shape(PrimitiveKind kind, Rng& rng);

// Uniform-by-surface-area over the union of parts. part_ids, when given,
// receives the part index each point was drawn from (boxes first).
PointCloud sample_surface(const PrimitiveShape& shape, int n, Rng& rng,
                          std::vector<int>* part_ids = nullptr);

PointCloud sample_primitive(PrimitiveKind kind, int n, uint64_t seed);

// Keeps the ceil(keep_fraction * N) points with largest dot product against
// the viewpoint. Expects a normalized cloud.
PointCloud make_partial(const PointCloud& cloud, const Point& viewpoint, double keep_fraction);

// ---- unpaired dataset ------------------------------------------------------

struct DatasetSplit {
    std::vector<PointCloud> complete_train;
    std::vector<PointCloud> partial_train;
    std::vector<std::pair<PointCloud, PointCloud>> paired_test;  // (partial, complete)
};

struct DatasetParams {
    std::vector<std::string> categories{"table", "chair", "lamp"};
    int count_per_category = 40;  // instances per category, split 2:2:1
    int points = 256;
    double keep_fraction = 0.5;
    uint64_t seed = 1;
};

// Instance pool split three ways with disjoint underlying instances:
// complete_train keeps only complete clouds, partial_train only partial
// views, paired_test keeps both sides of held-out instances.
DatasetSplit build_dataset(const DatasetParams& params);

struct ManifestEntry {
    std::string path;  // relative to the manifest file
    std::string category;
    std::string role;
    std::string instance;
    std::string split;  // complete_train | partial_train | paired_test
};

struct DatasetManifest {
    DatasetParams params;
    std::vector<ManifestEntry> entries;
};

// Writes all clouds as xyz plus manifest.json under dir.
std::filesystem::path save_dataset(const DatasetSplit& split, const DatasetParams& params,
                                   const std::filesystem::path& dir);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

std::vector<std::string> manifest_categories(const DatasetManifest& manifest);

// Loads one category's clouds back into a split.
DatasetSplit load_dataset(const std::filesystem::path& manifest_path,
                          const std::string& category);

}  // namespace ktnet

#endif
