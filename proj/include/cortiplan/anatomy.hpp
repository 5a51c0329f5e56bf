#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "cortiplan/image.hpp"
#include "cortiplan/vec.hpp"

namespace cortiplan {

// A cortical location with a known visual-field correspondence.
struct RetinotopySite {
    int id = 0;
    Vec3 cortical_pos;  // mm
    Vec2 visual_pos;    // degrees of visual angle
};

// Voxel grid of signed distances to gray matter, positive outside and
// negative inside, in mm. Node (i,j,k) sits at origin + (i,j,k)*spacing;
// values are x-fastest.
struct ScalarField3D {
    Vec3 origin;
    Vec3 spacing;
    std::array<int, 3> dims = {0, 0, 0};
    std::vector<double> values;

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    Vec3 node_pos(int i, int j, int k) const {
        return {origin.x + i * spacing.x, origin.y + j * spacing.y, origin.z + k * spacing.z};
    }
    Vec3 bbox_min() const { return origin; }
    Vec3 bbox_max() const {
        return {origin.x + (dims[0] - 1) * spacing.x, origin.y + (dims[1] - 1) * spacing.y,
                origin.z + (dims[2] - 1) * spacing.z};
    }
};

struct VesselSegment {
    Vec3 a, b;  // mm
};

// Centerline vessel model with an optional uniform radius.
struct VesselSet {
    std::vector<VesselSegment> segments;
    double radius = 0.0;  // mm
};

struct SdfSample {
    double value = 0.0;  // mm
    Vec3 gradient;
};

struct VesselDistance {
    double distance = std::numeric_limits<double>::infinity();  // mm, minus radius
    Vec3 gradient;       // unit vector from the nearest vessel point toward p
    int segment_id = -1; // -1 when the vessel set is empty
};

// Exact Euclidean signed distance on grid nodes. The zero level set passes
// through the outermost gray-matter voxels (mask voxels with a non-mask
// 6-neighbor); two transform passes assign +distance to nodes outside the
// mask and -distance inside.
ScalarField3D build_sdf(const std::vector<std::uint8_t>& mask, const std::array<int, 3>& dims,
                        const Vec3& origin, const Vec3& spacing);

// Trilinear interpolation with analytic gradient. Points outside the grid
// are clamped to the boundary cell (gradient zero along clamped axes).
SdfSample sample_sdf(const ScalarField3D& field, const Vec3& p);

// --- spatial indices -------------------------------------------------------

class SiteKdTree {
public:
    SiteKdTree() = default;
    explicit SiteKdTree(const std::vector<RetinotopySite>& sites);

    // k nearest sites by Euclidean distance, ascending, ties by smaller id.
    std::vector<std::pair<int, double>> nearest(const Vec3& p, int k) const;

private:
    struct Node {
        int axis = -1;       // -1 for leaf
        double split = 0.0;
        int left = -1, right = -1;
        int begin = 0, end = 0;  // leaf range into order_
    };
    struct Entry {
        Vec3 pos;
        int id;
        int site_index;
    };
    std::vector<Node> nodes_;
    std::vector<Entry> order_;
    int build(int begin, int end);
    friend class AnatomyModel;
};

class VesselBvh {
public:
    VesselBvh() = default;
    explicit VesselBvh(const std::vector<VesselSegment>& segments);

    // nearest segment: (euclidean distance to centerline, segment id);
    // equidistant ties resolve to the lowest id
    std::pair<double, int> nearest(const Vec3& p) const;

    bool empty() const { return segments_.empty(); }

private:
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1;
        int begin = 0, end = 0;
    };
    std::vector<Node> nodes_;
    std::vector<int> order_;
    std::vector<VesselSegment> segments_;  // owned copy, keeps the index self-contained
    int build(std::vector<Vec3>& centroids, int begin, int end);
    void query(int node, const Vec3& p, double& best_d2, int& best_id) const;
};

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b, Vec3* foot = nullptr);

// --- the anatomy bundle ----------------------------------------------------

// Immutable bundle of retinotopy, gray-matter SDF and vasculature with
// spatial indices. Safe to share across threads; all queries are read-only.
class AnatomyModel {
public:
    AnatomyModel(std::vector<RetinotopySite> sites, ScalarField3D gm_sdf, VesselSet vessels,
                 Extent visual_extent);

    const std::vector<RetinotopySite>& sites() const { return sites_; }
    const ScalarField3D& gm_sdf() const { return gm_sdf_; }
    const VesselSet& vessels() const { return vessels_; }
    const Extent& visual_extent() const { return visual_extent_; }

    // exactly the k sites minimizing Euclidean distance to p, ascending
    // distance, ties by smaller site id
    std::vector<std::pair<int, double>> nearest_sites(const Vec3& p, int k) const;

    const RetinotopySite& site_by_id(int id) const { return sites_[site_of_id_[id]]; }

    VesselDistance vessel_distance(const Vec3& p) const;

private:
    std::vector<RetinotopySite> sites_;
    ScalarField3D gm_sdf_;
    VesselSet vessels_;
    Extent visual_extent_;
    SiteKdTree site_index_;
    VesselBvh vessel_index_;
    std::vector<int> site_of_id_;
};

// --- file formats ----------------------------------------------------------

// CSV with header id,cx,cy,cz,vx,vy (mm, mm, mm, deg, deg).
std::vector<RetinotopySite> load_retinotopy(const std::string& path);
void save_retinotopy(const std::vector<RetinotopySite>& sites, const std::string& path);

// CSV with header ax,ay,az,bx,by,bz, one segment per row (mm).
std::vector<VesselSegment> load_vessels(const std::string& path);
void save_vessels(const std::vector<VesselSegment>& segments, const std::string& path);

// Raw 8-bit voxel mask (x-fastest) with text sidecar <path>.meta holding
// dims/origin/spacing lines.
void save_mask(const std::vector<std::uint8_t>& mask, const std::array<int, 3>& dims,
               const Vec3& origin, const Vec3& spacing, const std::string& path);
struct MaskVolume {
    std::vector<std::uint8_t> mask;
    std::array<int, 3> dims;
    Vec3 origin, spacing;
};
MaskVolume load_mask(const std::string& path);

// ASCII PLY subset (vertices + faces). The mesh is voxelized at the given
// resolution: surface cells are marked, the exterior is flood-filled from the
// grid boundary, and everything not reached is inside.
MaskVolume voxelize_ply(const std::string& path, double voxel_mm);

// --- synthetic anatomy -----------------------------------------------------

struct SynthParams {
    double patch_mm = 100.0;         // sheet side length bound in (u,v)
    int site_count = 2500;
    int vessel_count = 12;
    double gm_thickness_mm = 2.5;
    double k_map_mm = 15.0;          // complex-log map gain
    double a_map_deg = 0.75;         // foveal offset of the log map
    Extent visual_extent{5.0, 5.0};
    double fold_amplitude_mm = 1.5;
    double fold_period_mm = 22.0;
    double voxel_mm = 0.5;
    double vessel_radius_mm = 0.0;
    int vessel_waypoints = 8;
    double vessel_step_mm = 6.0;
};

// w = k*log(z + a) from visual degrees to flat sheet coordinates (mm).
Vec2 logmap_visual_to_sheet(const Vec2& z, double k_map, double a_map);
Vec2 logmap_sheet_to_visual(const Vec2& w, double k_map, double a_map);

// Analytic magnification of the log map at visual position z, in deg/mm.
double logmap_magnification(const Vec2& z, double k_map, double a_map);

// Sinusoidally folded cortical sheet: embeds sheet coordinate (u,v) in 3D.
Vec3 synth_sheet_embed(const Vec2& uv, const SynthParams& params);

// Deterministic synthetic anatomy with analytically known retinotopy.
AnatomyModel synth_anatomy(const SynthParams& params, std::uint64_t seed);

// Directory layout used by the CLI: retinotopy.csv, vessels.csv,
// gm_mask.raw(+.meta) or gm_mesh.ply, anatomy.meta (extent, vessel radius).
// The mask is recovered as the sdf<=0 set, which build_sdf maps back to the
// same field; a mesh is voxelized at mesh_voxel_mm.
void save_anatomy_dir(const AnatomyModel& anatomy, const std::string& dir);
AnatomyModel load_anatomy_dir(const std::string& dir, double mesh_voxel_mm = 0.5);

}  // namespace cortiplan
