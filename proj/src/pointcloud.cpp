#include "ktnet/pointcloud.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ktnet {

using nlohmann::json;

std::string role_name(CloudRole role) {
    switch (role) {
        case CloudRole::complete: return "complete";
        case CloudRole::partial: return "partial";
        case CloudRole::predicted: return "predicted";
    }
    return "complete";
}

CloudRole role_from_name(const std::string& name) {
    if (name == "complete") return CloudRole::complete;
    if (name == "partial") return CloudRole::partial;
    if (name == "predicted") return CloudRole::predicted;
    throw std::invalid_argument(msg_cat("unknown cloud role '", name, "'"));
}

CloudFormat format_from_path(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".xyz") return CloudFormat::xyz;
    if (ext == ".ply") return CloudFormat::ply_ascii;
    throw std::invalid_argument(
        msg_cat("cannot infer cloud format from extension '", ext, "' (use .xyz or .ply)"));
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

Point parse_point_line(const std::vector<std::string>& tok, const std::filesystem::path& path,
                       size_t line_no) {
    ensure(tok.size() == 3, path.string(), ":", line_no, ": expected 3 coordinates, got ",
           tok.size());
    Point p;
    double* c[3] = {&p.x, &p.y, &p.z};
    for (int i = 0; i < 3; ++i) {
        try {
            *c[i] = parse_double(tok[i]);
        } catch (const std::runtime_error&) {
            throw std::runtime_error(
                msg_cat(path.string(), ":", line_no, ": malformed coordinate '", tok[i], "'"));
        }
        ensure(std::isfinite(*c[i]), path.string(), ":", line_no,
               ": non-finite coordinate '", tok[i], "'");
    }
    return p;
}

PointCloud load_xyz(const std::filesystem::path& path) {
    std::ifstream is(path);
    ensure(is.good(), "cannot open point cloud file: ", path.string());
    PointCloud cloud;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        cloud.points.push_back(parse_point_line(tok, path, line_no));
    }
    ensure(!cloud.points.empty(), path.string(), ": no points found");
    return cloud;
}

PointCloud load_ply(const std::filesystem::path& path) {
    std::ifstream is(path);
    ensure(is.good(), "cannot open point cloud file: ", path.string());
    std::string line;
    size_t line_no = 0;

    auto next_line = [&]() {
        ensure(static_cast<bool>(std::getline(is, line)), path.string(), ":", line_no + 1,
               ": unexpected end of PLY header");
        ++line_no;
    };

    next_line();
    ensure(line == "ply", path.string(), ":1: missing 'ply' magic line");

    int64_t vertex_count = -1;
    std::vector<std::string> vertex_props;
    bool in_vertex_element = false;
    bool saw_format = false;
    while (true) {
        next_line();
        const auto tok = split_ws(line);
        if (tok.empty() || tok[0] == "comment") continue;
        if (tok[0] == "format") {
            ensure(tok.size() >= 2 && tok[1] == "ascii", path.string(), ":", line_no,
                   ": unsupported PLY format '", tok.size() >= 2 ? tok[1] : "", "' (only ascii)");
            saw_format = true;
        } else if (tok[0] == "element") {
            ensure(tok.size() == 3, path.string(), ":", line_no, ": malformed element line");
            if (tok[1] == "vertex") {
                vertex_count = std::stoll(tok[2]);
                in_vertex_element = true;
            } else {
                ensure(tok[2] == "0", path.string(), ":", line_no, ": unsupported PLY element '",
                       tok[1], "' with nonzero count");
                in_vertex_element = false;
            }
        } else if (tok[0] == "property") {
            if (!in_vertex_element) continue;  // properties of empty elements
            ensure(tok.size() == 3, path.string(), ":", line_no, ": malformed property line");
            ensure(tok[1] == "float" || tok[1] == "double" || tok[1] == "float32" ||
                       tok[1] == "float64",
                   path.string(), ":", line_no, ": unsupported vertex property type '", tok[1],
                   "'");
            vertex_props.push_back(tok[2]);
        } else if (tok[0] == "end_header") {
            break;
        } else {
            throw std::runtime_error(msg_cat(path.string(), ":", line_no,
                                             ": unsupported PLY header line '", line, "'"));
        }
    }
    ensure(saw_format, path.string(), ": PLY header missing 'format ascii' line");
    ensure(vertex_count >= 1, path.string(), ": PLY header missing 'element vertex' with N >= 1");
    ensure(vertex_props == std::vector<std::string>({"x", "y", "z"}), path.string(),
           ": vertex element must have exactly properties x, y, z");

    PointCloud cloud;
    cloud.points.reserve(static_cast<size_t>(vertex_count));
    for (int64_t i = 0; i < vertex_count; ++i) {
        ensure(static_cast<bool>(std::getline(is, line)), path.string(), ":", line_no + 1,
               ": expected ", vertex_count, " vertex lines, file ended after ", i);
        ++line_no;
        cloud.points.push_back(parse_point_line(split_ws(line), path, line_no));
    }
    return cloud;
}

}  // namespace

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
    return format == CloudFormat::xyz ? load_xyz(path) : load_ply(path);
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
    require(!cloud.points.empty(), "refusing to save an empty point cloud to ", path.string());
    std::ofstream os(path, std::ios::trunc);
    ensure(os.good(), "cannot open file for writing: ", path.string());
    if (format == CloudFormat::ply_ascii) {
        os << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size()
           << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    }
    for (const auto& p : cloud.points)
        os << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z)
           << '\n';
    os.flush();
    ensure(os.good(), "I/O failure while writing ", path.string());
}

NormalizeResult normalize(const PointCloud& cloud) {
    require(!cloud.points.empty(), "cannot normalize an empty cloud");
    Point c{0, 0, 0};
    for (const auto& p : cloud.points) c = c + p;
    c = c * (1.0 / static_cast<double>(cloud.points.size()));

    double max_norm = 0.0;
    for (const auto& p : cloud.points) max_norm = std::max(max_norm, (p - c).norm());
    require(max_norm > 0.0, "cannot normalize a degenerate cloud (all ", cloud.points.size(),
            " points identical)");

    NormalizeResult result;
    result.centroid = c;
    result.scale = max_norm;
    result.cloud = cloud;
    const double inv = 1.0 / max_norm;
    for (auto& p : result.cloud.points) p = (p - c) * inv;
    return result;
}

PrimitiveKind primitive_for_category(const std::string& category) {
    if (category == "table") return PrimitiveKind::box_table;
    if (category == "chair") return PrimitiveKind::box_chair;
    if (category == "lamp") return PrimitiveKind::ellipsoid_lamp;
    throw std::invalid_argument(
        msg_cat("unknown category '", category, "' (expected table, chair or lamp)"));
}

std::string category_for_primitive(PrimitiveKind kind) {
    switch (kind) {
        case PrimitiveKind::box_table: return "table";
        case PrimitiveKind::box_chair: return "chair";
        case PrimitiveKind::ellipsoid_lamp: return "lamp";
    }
    return "table";
}

double box_area(const Box& b) {
    const double dx = b.hi.x - b.lo.x, dy = b.hi.y - b.lo.y, dz = b.hi.z - b.lo.z;
    require(dx > 0 && dy > 0 && dz > 0, "box has non-positive dimension: extent [", dx, ",", dy,
            ",", dz, "]");
    return 2.0 * (dx * dy + dy * dz + dz * dx);
}

namespace {

// Surface element of the sphere-to-ellipsoid map at unit direction u.
double ellipsoid_jacobian(const Ellipsoid& e, const Point& u) {
    const double a = e.radii.x, b = e.radii.y, c = e.radii.z;
    return std::sqrt(b * b * c * c * u.x * u.x + a * a * c * c * u.y * u.y +
                     a * a * b * b * u.z * u.z);
}

}  // namespace

double ellipsoid_area(const Ellipsoid& e) {
    require(e.radii.x > 0 && e.radii.y > 0 && e.radii.z > 0,
            "ellipsoid has non-positive semi-axis [", e.radii.x, ",", e.radii.y, ",", e.radii.z,
            "]");
    // Midpoint rule over (theta, phi); integrand is smooth and periodic in
    // phi, so convergence is fast.
    constexpr int kTheta = 512, kPhi = 512;
    const double dt = M_PI / kTheta, dp = 2.0 * M_PI / kPhi;
    double area = 0.0;
    for (int i = 0; i < kTheta; ++i) {
        const double theta = (i + 0.5) * dt;
        const double st = std::sin(theta), ct = std::cos(theta);
        double row = 0.0;
        for (int j = 0; j < kPhi; ++j) {
            const double phi = (j + 0.5) * dp;
            const Point u{st * std::cos(phi), st * std::sin(phi), ct};
            row += ellipsoid_jacobian(e, u);
        }
        area += row * st;
    }
    return area * dt * dp;
}

PrimitiveShape make_primitive_shape(PrimitiveKind kind, Rng& rng) {
    PrimitiveShape shape;
    auto legs4 = [&](double x0, double x1, double y0, double y1, double s, double top,
                     std::vector<Box>& out) {
        out.push_back({{x0, y0, 0.0}, {x0 + s, y0 + s, top}});
        out.push_back({{x1 - s, y0, 0.0}, {x1, y0 + s, top}});
        out.push_back({{x0, y1 - s, 0.0}, {x0 + s, y1, top}});
        out.push_back({{x1 - s, y1 - s, 0.0}, {x1, y1, top}});
    };
    switch (kind) {
        case PrimitiveKind::box_table: {
            const double w = rng.uniform(0.8, 1.4);
            const double d = rng.uniform(0.6, 1.0);
            const double h = rng.uniform(0.55, 0.8);
            const double t = rng.uniform(0.04, 0.09);
            const double s = rng.uniform(0.05, 0.1);
            shape.boxes.push_back({{-w / 2, -d / 2, h - t}, {w / 2, d / 2, h}});  // top slab
            legs4(-w / 2, w / 2, -d / 2, d / 2, s, h - t, shape.boxes);
            break;
        }
        case PrimitiveKind::box_chair: {
            const double w = rng.uniform(0.45, 0.65);
            const double d = rng.uniform(0.45, 0.6);
            const double hs = rng.uniform(0.4, 0.5);   // seat height
            const double t = rng.uniform(0.04, 0.08);  // seat thickness
            const double hb = rng.uniform(0.45, 0.65);  // back height above seat
            const double tb = rng.uniform(0.04, 0.07);  // back thickness
            const double s = rng.uniform(0.04, 0.08);   // leg side
            shape.boxes.push_back({{-w / 2, -d / 2, hs - t}, {w / 2, d / 2, hs}});  // seat
            shape.boxes.push_back({{-w / 2, d / 2 - tb, hs}, {w / 2, d / 2, hs + hb}});  // back
            legs4(-w / 2, w / 2, -d / 2, d / 2, s, hs - t, shape.boxes);
            break;
        }
        case PrimitiveKind::ellipsoid_lamp: {
            const double s = rng.uniform(0.04, 0.07);    // stem side
            const double hst = rng.uniform(0.5, 0.9);    // stem height
            const double a = rng.uniform(0.15, 0.3);
            const double b = rng.uniform(0.15, 0.3);
            const double c = rng.uniform(0.12, 0.25);
            shape.boxes.push_back({{-s / 2, -s / 2, 0.0}, {s / 2, s / 2, hst}});
            shape.ellipsoids.push_back({{0.0, 0.0, hst + 0.5 * c}, {a, b, c}});
            break;
        }
    }
    return shape;
}

namespace {

Point sample_box_surface(const Box& b, Rng& rng) {
    const double dx = b.hi.x - b.lo.x, dy = b.hi.y - b.lo.y, dz = b.hi.z - b.lo.z;
    // Face weights: -x,+x,-y,+y,-z,+z.
    const double ax = dy * dz, ay = dx * dz, az = dx * dy;
    const double faces[6] = {ax, ax, ay, ay, az, az};
    double total = 0.0;
    for (double f : faces) total += f;
    double pick = rng.uniform() * total;
    int face = 0;
    for (; face < 5; ++face) {
        if (pick < faces[face]) break;
        pick -= faces[face];
    }
    const double u = rng.uniform(), v = rng.uniform();
    switch (face) {
        case 0: return {b.lo.x, b.lo.y + u * dy, b.lo.z + v * dz};
        case 1: return {b.hi.x, b.lo.y + u * dy, b.lo.z + v * dz};
        case 2: return {b.lo.x + u * dx, b.lo.y, b.lo.z + v * dz};
        case 3: return {b.lo.x + u * dx, b.hi.y, b.lo.z + v * dz};
        case 4: return {b.lo.x + u * dx, b.lo.y + v * dy, b.lo.z};
        default: return {b.lo.x + u * dx, b.lo.y + v * dy, b.hi.z};
    }
}

Point sample_unit_sphere(Rng& rng) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

Point sample_ellipsoid_surface(const Ellipsoid& e, Rng& rng) {
    // Rejection on the sphere-to-ellipsoid area element.
    const double a = e.radii.x, b = e.radii.y, c = e.radii.z;
    const double jmax = std::max({a * b, b * c, a * c});
    while (true) {
        const Point u = sample_unit_sphere(rng);
        if (rng.uniform() * jmax <= ellipsoid_jacobian(e, u))
            return {e.center.x + a * u.x, e.center.y + b * u.y, e.center.z + c * u.z};
    }
}

}  // namespace

PointCloud sample_surface(const PrimitiveShape& shape, int n, Rng& rng,
                          std::vector<int>* part_ids) {
    require(n >= 1, "sample_surface needs n >= 1, got ", n);
    require(shape.part_count() > 0, "primitive shape has no parts");
    std::vector<double> weights;
    for (const auto& b : shape.boxes) weights.push_back(box_area(b));
    for (const auto& e : shape.ellipsoids) weights.push_back(ellipsoid_area(e));
    std::vector<double> cumulative(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
    const double total = cumulative.back();

    PointCloud cloud;
    cloud.points.reserve(static_cast<size_t>(n));
    if (part_ids) part_ids->clear();
    for (int i = 0; i < n; ++i) {
        const double pick = rng.uniform() * total;
        const size_t part = static_cast<size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
        const size_t clamped = std::min(part, weights.size() - 1);
        if (clamped < shape.boxes.size())
            cloud.points.push_back(sample_box_surface(shape.boxes[clamped], rng));
        else
            cloud.points.push_back(
                sample_ellipsoid_surface(shape.ellipsoids[clamped - shape.boxes.size()], rng));
        if (part_ids) part_ids->push_back(static_cast<int>(clamped));
    }
    return cloud;
}

PointCloud sample_primitive(PrimitiveKind kind, int n, uint64_t seed) {
    Rng rng(seed);
    const PrimitiveShape shape = make_primitive_shape(kind, rng);
    PointCloud cloud = sample_surface(shape, n, rng);
    cloud.category = category_for_primitive(kind);
    cloud.role = CloudRole::complete;
    return cloud;
}

PointCloud make_partial(const PointCloud& cloud, const Point& viewpoint, double keep_fraction) {
    require(keep_fraction > 0.0 && keep_fraction < 1.0,
            "keep_fraction must lie in (0,1), got ", keep_fraction);
    require(!cloud.points.empty(), "cannot take a partial view of an empty cloud");
    const double vnorm = viewpoint.norm();
    require(vnorm > 0.0, "viewpoint must be a nonzero direction");
    const Point v = viewpoint * (1.0 / vnorm);

    const size_t n = cloud.points.size();
    const size_t keep = std::min(
        n, static_cast<size_t>(std::ceil(keep_fraction * static_cast<double>(n))));

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return cloud.points[a].dot(v) > cloud.points[b].dot(v);
    });

    PointCloud out;
    out.category = cloud.category;
    out.instance = cloud.instance;
    out.role = CloudRole::partial;
    std::vector<size_t> kept(order.begin(), order.begin() + keep);
    std::sort(kept.begin(), kept.end());  // keep original point order
    out.points.reserve(keep);
    for (size_t i : kept) out.points.push_back(cloud.points[i]);
    return out;
}

DatasetSplit build_dataset(const DatasetParams& params) {
    require(!params.categories.empty(), "build_dataset needs at least one category");
    require(params.count_per_category >= 2, "build_dataset needs count >= 2 per category, got ",
            params.count_per_category);
    require(params.points >= 1, "build_dataset needs points >= 1, got ", params.points);

    const int count = params.count_per_category;
    const int n_test = std::max(1, count / 5);
    const int n_complete = (count - n_test + 1) / 2;
    const int n_partial = count - n_test - n_complete;
    require(n_complete >= 1 && n_partial >= 1, "count ", count,
            " per category is too small to split into complete/partial/test partitions");

    DatasetSplit split;
    for (size_t ci = 0; ci < params.categories.size(); ++ci) {
        const std::string& category = params.categories[ci];
        const PrimitiveKind kind = primitive_for_category(category);
        for (int inst = 0; inst < count; ++inst) {
            Rng rng(Rng::mix(Rng::mix(params.seed, ci), static_cast<uint64_t>(inst)));
            const PrimitiveShape shape = make_primitive_shape(kind, rng);
            PointCloud complete = sample_surface(shape, params.points, rng);
            complete = normalize(complete).cloud;
            complete.category = category;
            complete.role = CloudRole::complete;
            char idbuf[32];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", category.c_str(), inst);
            complete.instance = idbuf;

            const Point view = sample_unit_sphere(rng);
            if (inst < n_complete) {
                split.complete_train.push_back(std::move(complete));
            } else if (inst < n_complete + n_partial) {
                split.partial_train.push_back(make_partial(complete, view, params.keep_fraction));
            } else {
                PointCloud partial = make_partial(complete, view, params.keep_fraction);
                split.paired_test.emplace_back(std::move(partial), std::move(complete));
            }
        }
    }
    return split;
}

namespace {

void write_entry(json& arr, const std::filesystem::path& dir, const PointCloud& cloud,
                 const std::string& split_name, const std::string& rel) {
    save_cloud(cloud, dir / rel, CloudFormat::xyz);
    arr.push_back(json{{"path", rel},
                       {"category", cloud.category},
                       {"role", role_name(cloud.role)},
                       {"instance", cloud.instance},
                       {"split", split_name}});
}

}  // namespace

std::filesystem::path save_dataset(const DatasetSplit& split, const DatasetParams& params,
                                   const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "complete_train");
    fs::create_directories(dir / "partial_train");
    fs::create_directories(dir / "test_partial");
    fs::create_directories(dir / "test_complete");

    json entries = json::array();
    for (const auto& c : split.complete_train)
        write_entry(entries, dir, c, "complete_train", "complete_train/" + c.instance + ".xyz");
    for (const auto& c : split.partial_train)
        write_entry(entries, dir, c, "partial_train", "partial_train/" + c.instance + ".xyz");
    for (const auto& [partial, complete] : split.paired_test) {
        write_entry(entries, dir, partial, "paired_test", "test_partial/" + partial.instance + ".xyz");
        write_entry(entries, dir, complete, "paired_test", "test_complete/" + complete.instance + ".xyz");
    }

    json manifest{{"seed", params.seed},
                  {"points", params.points},
                  {"keep_fraction", params.keep_fraction},
                  {"count_per_category", params.count_per_category},
                  {"categories", params.categories},
                  {"clouds", entries}};
    const fs::path manifest_path = dir / "manifest.json";
    std::ofstream os(manifest_path, std::ios::trunc);
    ensure(os.good(), "cannot write dataset manifest: ", manifest_path.string());
    os << manifest.dump(2) << "\n";
    os.flush();
    ensure(os.good(), "I/O failure while writing ", manifest_path.string());
    return manifest_path;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    ensure(is.good(), "cannot open dataset manifest: ", manifest_path.string());
    json j = json::parse(is);
    DatasetManifest m;
    m.params.seed = j.at("seed").get<uint64_t>();
    m.params.points = j.at("points").get<int>();
    m.params.keep_fraction = j.at("keep_fraction").get<double>();
    m.params.count_per_category = j.at("count_per_category").get<int>();
    m.params.categories = j.at("categories").get<std::vector<std::string>>();
    for (const auto& e : j.at("clouds")) {
        m.entries.push_back(ManifestEntry{e.at("path").get<std::string>(),
                                          e.at("category").get<std::string>(),
                                          e.at("role").get<std::string>(),
                                          e.at("instance").get<std::string>(),
                                          e.at("split").get<std::string>()});
    }
    return m;
}

std::vector<std::string> manifest_categories(const DatasetManifest& manifest) {
    return manifest.params.categories;
}

DatasetSplit load_dataset(const std::filesystem::path& manifest_path,
                          const std::string& category) {
    const DatasetManifest manifest = load_manifest(manifest_path);
    const auto base = manifest_path.parent_path();

    bool known = false;
    for (const auto& c : manifest.params.categories) known = known || c == category;
    if (!known) {
        std::string available;
        for (const auto& c : manifest.params.categories) {
            if (!available.empty()) available += ", ";
            available += c;
        }
        throw std::invalid_argument(msg_cat("category '", category,
                                            "' not in dataset (available: ", available, ")"));
    }

    DatasetSplit split;
    std::map<std::string, PointCloud> test_partial, test_complete;
    for (const auto& e : manifest.entries) {
        if (e.category != category) continue;
        PointCloud cloud = load_cloud(base / e.path, CloudFormat::xyz);
        cloud.category = e.category;
        cloud.role = role_from_name(e.role);
        cloud.instance = e.instance;
        if (e.split == "complete_train") {
            split.complete_train.push_back(std::move(cloud));
        } else if (e.split == "partial_train") {
            split.partial_train.push_back(std::move(cloud));
        } else if (e.split == "paired_test") {
            auto& slot = cloud.role == CloudRole::partial ? test_partial : test_complete;
            slot.emplace(e.instance, std::move(cloud));
        } else {
            throw std::runtime_error(msg_cat("manifest entry '", e.path,
                                             "' has unknown split '", e.split, "'"));
        }
    }
    for (auto& [instance, partial] : test_partial) {
        auto it = test_complete.find(instance);
        ensure(it != test_complete.end(), "paired_test instance '", instance,
               "' is missing its complete cloud");
        split.paired_test.emplace_back(std::move(partial), std::move(it->second));
    }
    return split;
}

}  // namespace ktnet
