#include "lgcps/sphere.hpp"

#include <algorithm>
#include <cmath>

namespace lgcps {

double normalize_lon(double lon_deg) {
  double lon = std::fmod(lon_deg + 180.0, 360.0);
  if (lon < 0.0) lon += 360.0;
  return lon - 180.0;
}

SpherePoint::SpherePoint(double lon_deg, double lat_deg)
    : lon(normalize_lon(lon_deg)), lat(lat_deg) {
  if (!(lat_deg >= -90.0 && lat_deg <= 90.0))
    throw std::invalid_argument("SpherePoint: latitude " + std::to_string(lat_deg) +
                                " outside [-90, 90]");
}

double great_circle_distance(const SpherePoint& a, const SpherePoint& b) {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlam = deg2rad(b.lon - a.lon);
  const double sp = std::sin(0.5 * dphi);
  const double sl = std::sin(0.5 * dlam);
  double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  h = std::clamp(h, 0.0, 1.0);
  const double d = 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
  return std::min(d, kPi * kEarthRadiusKm);
}

double Region::lon_extent() const {
  double ext = lon_max - lon_min;
  if (ext <= 0.0) ext += 360.0;  // wrapped across the date line
  return std::min(ext, 360.0);
}

double Region::lat_extent() const { return lat_max - lat_min; }

bool Region::is_full_sphere() const {
  constexpr double eps = 1e-9;
  return lon_extent() >= 360.0 - eps && lat_min <= -90.0 + eps && lat_max >= 90.0 - eps;
}

SpherePoint Region::centroid() const {
  return SpherePoint(lon_min + 0.5 * lon_extent(), 0.5 * (lat_min + lat_max));
}

Region Region::full_sphere() { return Region{-180.0, 180.0, -90.0, 90.0}; }

namespace {

void check_region(const Region& region) {
  if (!(region.lat_min < region.lat_max))
    throw std::invalid_argument("Region: lat_min must be < lat_max");
  if (region.lat_min < -90.0 || region.lat_max > 90.0)
    throw std::invalid_argument("Region: latitude bounds outside [-90, 90]");
  if (region.lon_extent() <= 0.0) throw std::invalid_argument("Region: empty longitude extent");
}

int axis_cells(double extent, double res) {
  return static_cast<int>(std::floor(extent / res + 1e-9));
}

}  // namespace

double Grid::total_area() const {
  double sum = 0.0;
  for (const auto& c : cells) sum += c.area_km2;
  return sum;
}

std::vector<double> Grid::unit_weights() const {
  const double total = total_area();
  if (total <= 0.0) throw std::runtime_error("Grid: nonpositive total area");
  const double scale = static_cast<double>(size()) / total;
  std::vector<double> w(cells.size());
  for (size_t k = 0; k < cells.size(); ++k) w[k] = cells[k].area_km2 * scale;
  return w;
}

Grid build_grid(const Region& region, double resolution_deg) {
  check_region(region);
  if (!(resolution_deg > 0.0)) throw std::invalid_argument("build_grid: resolution must be > 0");

  Grid grid;
  grid.region = region;
  grid.resolution_deg = resolution_deg;
  grid.n_lon = axis_cells(region.lon_extent(), resolution_deg);
  grid.n_lat = axis_cells(region.lat_extent(), resolution_deg);
  if (grid.n_lon < 1 || grid.n_lat < 1)
    throw std::invalid_argument("build_grid: region smaller than one cell");

  const double r2 = kEarthRadiusKm * kEarthRadiusKm;
  const double dlam = deg2rad(resolution_deg);
  grid.cells.reserve(static_cast<size_t>(grid.n_lon) * grid.n_lat);
  for (int j = 0; j < grid.n_lat; ++j) {
    const double lat_lo = region.lat_min + j * resolution_deg;
    const double lat_hi = lat_lo + resolution_deg;
    const double band = r2 * dlam * (std::sin(deg2rad(lat_hi)) - std::sin(deg2rad(lat_lo)));
    const double lat_c = lat_lo + 0.5 * resolution_deg;
    for (int i = 0; i < grid.n_lon; ++i) {
      GridCell cell;
      cell.center = SpherePoint(region.lon_min + (i + 0.5) * resolution_deg, lat_c);
      cell.area_km2 = band;
      cell.index = static_cast<long>(j) * grid.n_lon + i;
      grid.cells.push_back(cell);
    }
  }
  return grid;
}

namespace {

std::vector<SpherePoint> fibonacci_sphere(int m) {
  // Golden-angle spiral; z strides the open interval (-1, 1).
  const double golden_deg = 360.0 * (1.0 - 2.0 / (1.0 + std::sqrt(5.0)));
  std::vector<SpherePoint> pts;
  pts.reserve(m);
  for (int i = 0; i < m; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / m;
    pts.emplace_back(normalize_lon(i * golden_deg), rad2deg(std::asin(z)));
  }
  return pts;
}

}  // namespace

std::vector<SpherePoint> place_knots(const Region& region, int m) {
  check_region(region);
  if (m < 1) throw std::invalid_argument("place_knots: m must be >= 1");
  if (region.is_full_sphere()) return fibonacci_sphere(m);

  // Pick the divisor pair of m closest to the region aspect ratio.
  const double aspect = region.lon_extent() / region.lat_extent();
  int best_nlon = 1;
  double best_gap = std::abs(std::log(1.0 / static_cast<double>(m)) - std::log(aspect));
  for (int d = 2; d <= m; ++d) {
    if (m % d != 0) continue;
    const double gap = std::abs(std::log(static_cast<double>(d) / (m / d)) - std::log(aspect));
    if (gap < best_gap - 1e-12) {
      best_gap = gap;
      best_nlon = d;
    }
  }
  const int n_lon = best_nlon;
  const int n_lat = m / n_lon;

  const double dl = region.lon_extent() / n_lon;
  const double db = region.lat_extent() / n_lat;
  std::vector<SpherePoint> pts;
  pts.reserve(m);
  for (int j = 0; j < n_lat; ++j)
    for (int i = 0; i < n_lon; ++i)
      pts.emplace_back(region.lon_min + (i + 0.5) * dl, region.lat_min + (j + 0.5) * db);
  return pts;
}

}  // namespace lgcps
