#include "cortiplan/anatomy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <unordered_map>
#include <unordered_set>

#include "cortiplan/errors.hpp"
#include "cortiplan/util.hpp"

namespace cortiplan {

// --- geometry ---------------------------------------------------------------

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b, Vec3* foot) {
    Vec3 ab = b - a;
    double len2 = ab.norm2();
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    Vec3 q = a + ab * t;
    if (foot) *foot = q;
    return (p - q).norm();
}

// --- kd-tree over retinotopy sites -------------------------------------------

namespace {
constexpr int kKdLeafSize = 8;
}

SiteKdTree::SiteKdTree(const std::vector<RetinotopySite>& sites) {
    order_.reserve(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i)
        order_.push_back({sites[i].cortical_pos, sites[i].id, static_cast<int>(i)});
    if (!order_.empty()) build(0, static_cast<int>(order_.size()));
}

int SiteKdTree::build(int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kKdLeafSize) return self;

    Vec3 lo = order_[begin].pos, hi = order_[begin].pos;
    for (int i = begin + 1; i < end; ++i) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], order_[i].pos[a]);
            hi[a] = std::max(hi[a], order_[i].pos[a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;

    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [axis](const Entry& x, const Entry& y) { return x.pos[axis] < y.pos[axis]; });
    double split = order_[mid].pos[axis];

    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[self].axis = axis;
    nodes_[self].split = split;
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

namespace {
struct KnnCand {
    double d2;
    int id;
    int site_index;
};
// priority_queue top = worst candidate: larger distance, ties broken so the
// larger id is evicted first
struct KnnWorse {
    bool operator()(const KnnCand& a, const KnnCand& b) const {
        if (a.d2 != b.d2) return a.d2 < b.d2;
        return a.id < b.id;
    }
};
}  // namespace

std::vector<std::pair<int, double>> SiteKdTree::nearest(const Vec3& p, int k) const {
    std::priority_queue<KnnCand, std::vector<KnnCand>, KnnWorse> heap;

    auto consider = [&](const Entry& e) {
        double d2 = (p - e.pos).norm2();
        if (static_cast<int>(heap.size()) < k) {
            heap.push({d2, e.id, e.site_index});
        } else {
            const KnnCand& worst = heap.top();
            if (d2 < worst.d2 || (d2 == worst.d2 && e.id < worst.id)) {
                heap.pop();
                heap.push({d2, e.id, e.site_index});
            }
        }
    };

    // recursive descent, nearer child first; a subtree is skipped only when
    // its plane distance strictly exceeds the current worst candidate so
    // that equal-distance lower ids are still found
    auto visit = [&](auto&& self, int ni) -> void {
        const Node& node = nodes_[ni];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) consider(order_[i]);
            return;
        }
        double delta = p[node.axis] - node.split;
        int near = delta < 0 ? node.left : node.right;
        int far = delta < 0 ? node.right : node.left;
        self(self, near);
        if (static_cast<int>(heap.size()) < k || delta * delta <= heap.top().d2)
            self(self, far);
    };
    if (!nodes_.empty()) visit(visit, 0);

    std::vector<std::pair<int, double>> result(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
        result[i] = {heap.top().id, std::sqrt(heap.top().d2)};
        heap.pop();
    }
    return result;
}

// --- BVH over vessel segments ------------------------------------------------

namespace {
constexpr int kBvhLeafSize = 4;

double point_aabb_dist2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        double d = 0.0;
        if (p[a] < lo[a]) d = lo[a] - p[a];
        else if (p[a] > hi[a]) d = p[a] - hi[a];
        d2 += d * d;
    }
    return d2;
}
}  // namespace

VesselBvh::VesselBvh(const std::vector<VesselSegment>& segments) : segments_(segments) {
    if (segments_.empty()) return;
    order_.resize(segments_.size());
    for (std::size_t i = 0; i < segments_.size(); ++i) order_[i] = static_cast<int>(i);
    std::vector<Vec3> centroids(segments_.size());
    for (std::size_t i = 0; i < segments_.size(); ++i)
        centroids[i] = (segments_[i].a + segments_[i].b) * 0.5;
    build(centroids, 0, static_cast<int>(segments_.size()));
}

int VesselBvh::build(std::vector<Vec3>& centroids, int begin, int end) {
    Node node;
    node.begin = begin;
    node.end = end;
    const auto& segs = segments_;
    node.lo = segs[order_[begin]].a;
    node.hi = segs[order_[begin]].a;
    for (int i = begin; i < end; ++i) {
        const VesselSegment& s = segs[order_[i]];
        for (int a = 0; a < 3; ++a) {
            node.lo[a] = std::min({node.lo[a], s.a[a], s.b[a]});
            node.hi[a] = std::max({node.hi[a], s.a[a], s.b[a]});
        }
    }
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kBvhLeafSize) return self;

    Vec3 clo = centroids[order_[begin]], chi = centroids[order_[begin]];
    for (int i = begin + 1; i < end; ++i) {
        for (int a = 0; a < 3; ++a) {
            clo[a] = std::min(clo[a], centroids[order_[i]][a]);
            chi[a] = std::max(chi[a], centroids[order_[i]][a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (chi[a] - clo[a] > chi[axis] - clo[axis]) axis = a;

    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int x, int y) { return centroids[x][axis] < centroids[y][axis]; });

    int left = build(centroids, begin, mid);
    int right = build(centroids, mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void VesselBvh::query(int ni, const Vec3& p, double& best_d2, int& best_id) const {
    const Node& node = nodes_[ni];
    if (node.left < 0) {
        const auto& segs = segments_;
        for (int i = node.begin; i < node.end; ++i) {
            int id = order_[i];
            double d = point_segment_distance(p, segs[id].a, segs[id].b);
            double d2 = d * d;
            if (d2 < best_d2 || (d2 == best_d2 && id < best_id)) {
                best_d2 = d2;
                best_id = id;
            }
        }
        return;
    }
    double dl = point_aabb_dist2(p, nodes_[node.left].lo, nodes_[node.left].hi);
    double dr = point_aabb_dist2(p, nodes_[node.right].lo, nodes_[node.right].hi);
    int first = node.left, second = node.right;
    double dfirst = dl, dsecond = dr;
    if (dr < dl) {
        std::swap(first, second);
        std::swap(dfirst, dsecond);
    }
    if (dfirst <= best_d2) query(first, p, best_d2, best_id);
    if (dsecond <= best_d2) query(second, p, best_d2, best_id);
}

std::pair<double, int> VesselBvh::nearest(const Vec3& p) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    int best_id = -1;
    if (!nodes_.empty()) query(0, p, best_d2, best_id);
    return {std::sqrt(best_d2), best_id};
}

// --- anatomy bundle ----------------------------------------------------------

AnatomyModel::AnatomyModel(std::vector<RetinotopySite> sites, ScalarField3D gm_sdf,
                           VesselSet vessels, Extent visual_extent)
    : sites_(std::move(sites)),
      gm_sdf_(std::move(gm_sdf)),
      vessels_(std::move(vessels)),
      visual_extent_(visual_extent) {
    if (sites_.empty()) throw std::invalid_argument("AnatomyModel: no retinotopy sites");
    std::unordered_map<int, int> id_map;
    id_map.reserve(sites_.size());
    int max_id = 0;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        const RetinotopySite& s = sites_[i];
        if (!s.cortical_pos.finite())
            throw std::invalid_argument("AnatomyModel: non-finite cortical position at site id " +
                                        std::to_string(s.id));
        if (std::abs(s.visual_pos.x) > visual_extent_.half_w + 1e-9 ||
            std::abs(s.visual_pos.y) > visual_extent_.half_h + 1e-9)
            throw std::invalid_argument("AnatomyModel: site id " + std::to_string(s.id) +
                                        " outside the declared visual extent");
        if (s.id < 0) throw std::invalid_argument("AnatomyModel: negative site id");
        if (!id_map.emplace(s.id, static_cast<int>(i)).second)
            throw std::invalid_argument("AnatomyModel: duplicate site id " + std::to_string(s.id));
        max_id = std::max(max_id, s.id);
        double sdf = sample_sdf(gm_sdf_, s.cortical_pos).value;
        if (sdf > 0.5)
            throw std::invalid_argument("AnatomyModel: site id " + std::to_string(s.id) +
                                        " lies " + fmt_double(sdf) + " mm outside gray matter");
    }
    for (const VesselSegment& seg : vessels_.segments)
        if ((seg.b - seg.a).norm2() <= 0.0)
            throw std::invalid_argument("AnatomyModel: zero-length vessel segment");

    site_of_id_.assign(max_id + 1, -1);
    for (auto [id, idx] : id_map) site_of_id_[id] = idx;
    site_index_ = SiteKdTree(sites_);
    vessel_index_ = VesselBvh(vessels_.segments);
}

std::vector<std::pair<int, double>> AnatomyModel::nearest_sites(const Vec3& p, int k) const {
    if (k <= 0 || k > static_cast<int>(sites_.size()))
        throw std::invalid_argument("nearest_sites: k = " + std::to_string(k) + " with " +
                                    std::to_string(sites_.size()) + " sites");
    return site_index_.nearest(p, k);
}

VesselDistance AnatomyModel::vessel_distance(const Vec3& p) const {
    VesselDistance out;
    if (vessels_.segments.empty()) return out;  // +inf sentinel, zero gradient
    auto [dist, id] = vessel_index_.nearest(p);
    out.segment_id = id;
    out.distance = dist - vessels_.radius;
    const VesselSegment& seg = vessels_.segments[id];
    Vec3 foot;
    point_segment_distance(p, seg.a, seg.b, &foot);
    Vec3 delta = p - foot;
    double n = delta.norm();
    if (n > 1e-12) out.gradient = delta / n;
    return out;
}

// --- CSV formats -------------------------------------------------------------

namespace {

std::vector<std::string_view> data_lines(const std::string& content) {
    std::vector<std::string_view> lines;
    std::string_view sv(content);
    std::size_t start = 0;
    while (start < sv.size()) {
        std::size_t pos = sv.find('\n', start);
        if (pos == std::string_view::npos) pos = sv.size();
        lines.push_back(strip_cr(sv.substr(start, pos - start)));
        start = pos + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

}  // namespace

std::vector<RetinotopySite> load_retinotopy(const std::string& path) {
    std::string content = read_file(path);
    auto lines = data_lines(content);
    if (lines.empty() || lines[0] != "id,cx,cy,cz,vx,vy")
        throw ParseError(path + ":1: expected header id,cx,cy,cz,vx,vy");
    if (lines.size() == 1) throw FormatError(path + ": empty input (no data rows)");

    std::vector<RetinotopySite> sites;
    sites.reserve(lines.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        auto fields = split(lines[li], ',');
        long long id;
        double v[5];
        bool ok = fields.size() == 6 && parse_int(fields[0], id);
        for (int f = 0; ok && f < 5; ++f) ok = parse_double(fields[f + 1], v[f]);
        if (!ok)
            throw ParseError(path + ":" + std::to_string(li + 1) + ": malformed retinotopy row");
        RetinotopySite s;
        s.id = static_cast<int>(id);
        s.cortical_pos = {v[0], v[1], v[2]};
        s.visual_pos = {v[3], v[4]};
        sites.push_back(s);
    }
    return sites;
}

void save_retinotopy(const std::vector<RetinotopySite>& sites, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "id,cx,cy,cz,vx,vy\n";
    for (const RetinotopySite& s : sites) {
        out << s.id << ',' << fmt_double(s.cortical_pos.x) << ',' << fmt_double(s.cortical_pos.y)
            << ',' << fmt_double(s.cortical_pos.z) << ',' << fmt_double(s.visual_pos.x) << ','
            << fmt_double(s.visual_pos.y) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<VesselSegment> load_vessels(const std::string& path) {
    std::string content = read_file(path);
    auto lines = data_lines(content);
    if (lines.empty() || lines[0] != "ax,ay,az,bx,by,bz")
        throw ParseError(path + ":1: expected header ax,ay,az,bx,by,bz");

    std::vector<VesselSegment> segments;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        auto fields = split(lines[li], ',');
        double v[6];
        bool ok = fields.size() == 6;
        for (int f = 0; ok && f < 6; ++f) ok = parse_double(fields[f], v[f]);
        if (!ok) throw ParseError(path + ":" + std::to_string(li + 1) + ": malformed vessel row");
        segments.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    }
    return segments;
}

void save_vessels(const std::vector<VesselSegment>& segments, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "ax,ay,az,bx,by,bz\n";
    for (const VesselSegment& s : segments) {
        out << fmt_double(s.a.x) << ',' << fmt_double(s.a.y) << ',' << fmt_double(s.a.z) << ','
            << fmt_double(s.b.x) << ',' << fmt_double(s.b.y) << ',' << fmt_double(s.b.z) << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

// --- voxel mask io -----------------------------------------------------------

void save_mask(const std::vector<std::uint8_t>& mask, const std::array<int, 3>& dims,
               const Vec3& origin, const Vec3& spacing, const std::string& path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + path);
        out.write(reinterpret_cast<const char*>(mask.data()), mask.size());
        if (!out) throw IoError("write failed: " + path);
    }
    std::ofstream meta(path + ".meta");
    if (!meta) throw IoError("cannot open for writing: " + path + ".meta");
    meta << "dims " << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n';
    meta << "origin " << fmt_double(origin.x) << ' ' << fmt_double(origin.y) << ' '
         << fmt_double(origin.z) << '\n';
    meta << "spacing " << fmt_double(spacing.x) << ' ' << fmt_double(spacing.y) << ' '
         << fmt_double(spacing.z) << '\n';
}

MaskVolume load_mask(const std::string& path) {
    std::string meta_content = read_file(path + ".meta");
    MaskVolume vol{};
    bool have_dims = false, have_origin = false, have_spacing = false;
    for (std::string_view line : data_lines(meta_content)) {
        auto tok = split(line, ' ');
        if (tok.empty()) continue;
        if (tok[0] == "dims" && tok.size() == 4) {
            long long d[3];
            for (int a = 0; a < 3; ++a)
                if (!parse_int(tok[a + 1], d[a])) throw FormatError(path + ".meta: bad dims");
            vol.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
            have_dims = true;
        } else if (tok[0] == "origin" && tok.size() == 4) {
            for (int a = 0; a < 3; ++a)
                if (!parse_double(tok[a + 1], vol.origin[a]))
                    throw FormatError(path + ".meta: bad origin");
            have_origin = true;
        } else if (tok[0] == "spacing" && tok.size() == 4) {
            for (int a = 0; a < 3; ++a)
                if (!parse_double(tok[a + 1], vol.spacing[a]))
                    throw FormatError(path + ".meta: bad spacing");
            have_spacing = true;
        }
    }
    if (!have_dims || !have_origin || !have_spacing)
        throw FormatError(path + ".meta: missing dims/origin/spacing");
    std::string raw = read_file(path);
    std::size_t n = static_cast<std::size_t>(vol.dims[0]) * vol.dims[1] * vol.dims[2];
    if (raw.size() != n)
        throw FormatError(path + ": mask has " + std::to_string(raw.size()) + " voxels, expected " +
                          std::to_string(n));
    vol.mask.assign(raw.begin(), raw.end());
    for (auto& v : vol.mask) v = v ? 1 : 0;
    return vol;
}

}  // namespace cortiplan
