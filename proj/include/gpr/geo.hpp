#pragma once

#include <stdexcept>

namespace gpr {

// WGS-84 geodetic coordinate, degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
};

// Local East-North-Up frame, meters. z is carried but spatial relations
// are evaluated on (x, y) only.
struct EnuPoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

class InvalidCoordinateError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

bool is_valid(const GeoPoint& p);

// Geodetic -> ECEF -> ENU on the WGS-84 ellipsoid, reference altitude 0.
// Throws InvalidCoordinateError on out-of-range or non-finite input.
EnuPoint gps_to_enu(const GeoPoint& point, const GeoPoint& reference);

// Planar Euclidean distance over (x, y).
double enu_distance(const EnuPoint& a, const EnuPoint& b);

}  // namespace gpr
