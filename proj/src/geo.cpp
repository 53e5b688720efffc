#include "gpr/geo.hpp"

#include <cmath>

namespace gpr {

namespace {

constexpr double kWgs84A = 6378137.0;
constexpr double kWgs84F = 1.0 / 298.257223563;
constexpr double kWgs84E2 = kWgs84F * (2.0 - kWgs84F);
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

struct Ecef {
    double x, y, z;
};

Ecef geodetic_to_ecef(const GeoPoint& p) {
    const double lat = p.lat * kDegToRad;
    const double lon = p.lon * kDegToRad;
    const double sin_lat = std::sin(lat);
    const double cos_lat = std::cos(lat);
    const double n = kWgs84A / std::sqrt(1.0 - kWgs84E2 * sin_lat * sin_lat);
    return {n * cos_lat * std::cos(lon), n * cos_lat * std::sin(lon),
            n * (1.0 - kWgs84E2) * sin_lat};
}

}  // namespace

bool is_valid(const GeoPoint& p) {
    return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
           p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

EnuPoint gps_to_enu(const GeoPoint& point, const GeoPoint& reference) {
    if (!is_valid(point) || !is_valid(reference)) {
        throw InvalidCoordinateError("latitude/longitude out of range");
    }
    const Ecef p = geodetic_to_ecef(point);
    const Ecef r = geodetic_to_ecef(reference);
    const double dx = p.x - r.x;
    const double dy = p.y - r.y;
    const double dz = p.z - r.z;

    const double lat = reference.lat * kDegToRad;
    const double lon = reference.lon * kDegToRad;
    const double sin_lat = std::sin(lat);
    const double cos_lat = std::cos(lat);
    const double sin_lon = std::sin(lon);
    const double cos_lon = std::cos(lon);

    EnuPoint out;
    out.x = -sin_lon * dx + cos_lon * dy;
    out.y = -sin_lat * cos_lon * dx - sin_lat * sin_lon * dy + cos_lat * dz;
    out.z = cos_lat * cos_lon * dx + cos_lat * sin_lon * dy + sin_lat * dz;
    return out;
}

double enu_distance(const EnuPoint& a, const EnuPoint& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace gpr
