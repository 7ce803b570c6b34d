#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lgcps {

/// Radius of the reference sphere, km. All distances and spatial ranges
/// are expressed on this sphere.
inline constexpr double kEarthRadiusKm = 6371.0;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * (kPi / 180.0); }
inline double rad2deg(double rad) { return rad * (180.0 / kPi); }

/// Normalize a longitude in degrees to [-180, 180).
double normalize_lon(double lon_deg);

/// A location on the sphere. Longitude is kept in [-180, 180), latitude
/// must lie in [-90, 90].
struct SpherePoint {
  double lon = 0.0;
  double lat = 0.0;

  SpherePoint() = default;
  SpherePoint(double lon_deg, double lat_deg);
};

/// Great-circle distance in km (haversine form, clamped to pi*R).
double great_circle_distance(const SpherePoint& a, const SpherePoint& b);

/// A lon/lat box. lon_max may exceed 180 so that regions crossing the
/// date line keep lon_min < lon_max (e.g. [170, 190) covers 170E..170W).
struct Region {
  double lon_min = 0.0;
  double lon_max = 0.0;
  double lat_min = 0.0;
  double lat_max = 0.0;

  double lon_extent() const;
  double lat_extent() const;
  bool is_full_sphere() const;
  SpherePoint centroid() const;

  static Region full_sphere();
};

/// One integration cell of a lon/lat tiling: its center, its exact
/// spherical area, and its row index in the grid it came from.
struct GridCell {
  SpherePoint center;
  double area_km2 = 0.0;
  long index = -1;
};

/// Regular lon/lat tiling of a region. Cells are laid out latitude-band
/// major (south to north), west to east within a band. Cell k covers the
/// half-open box [lo, lo+res) on both axes; a trailing strip narrower
/// than the resolution is not emitted, so the cell count per axis is
/// floor(extent / resolution).
struct Grid {
  Region region;
  double resolution_deg = 0.0;
  int n_lon = 0;
  int n_lat = 0;
  std::vector<GridCell> cells;

  long size() const { return static_cast<long>(cells.size()); }
  double total_area() const;

  /// Integration weights normalized so their sum equals the cell count
  /// (unit-cell convention: |W| == N). Intensities are then "events per
  /// cell" regardless of resolution.
  std::vector<double> unit_weights() const;
};

Grid build_grid(const Region& region, double resolution_deg);

/// Deterministic, approximately uniform knot set. On a full sphere this
/// is a Fibonacci lattice; otherwise a regular lon x lat sub-lattice
/// whose factor pair (n_lon, n_lat), n_lon * n_lat = m, best matches the
/// region aspect ratio. Knots sit at sub-cell midpoints, strictly inside
/// the region.
std::vector<SpherePoint> place_knots(const Region& region, int m);

}  // namespace lgcps
