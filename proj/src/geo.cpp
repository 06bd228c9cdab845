#include "swarm/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace swarm
{
    namespace
    {
        constexpr double kDeg = std::numbers::pi / 180.0;

        // Wraps an angle difference in radians into [-pi, pi].
        double wrap_pi(double a) noexcept
        {
            return std::remainder(a, 2.0 * std::numbers::pi);
        }

        double wrap_lon_degrees(double lon) noexcept
        {
            lon = std::remainder(lon, 360.0);
            return lon == -180.0 ? 180.0 : lon;
        }

        struct Planar
        {
            double x;
            double y;
        };
    }

    double haversine_distance(const GeoPosition &a, const GeoPosition &b) noexcept
    {
        const double p1 = a.lat * kDeg;
        const double p2 = b.lat * kDeg;
        const double dp = p2 - p1;
        const double dl = (b.lon - a.lon) * kDeg;
        const double s1 = std::sin(dp / 2.0);
        const double s2 = std::sin(dl / 2.0);
        double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
        h = std::clamp(h, 0.0, 1.0);
        return 2.0 * kEarthRadius * std::asin(std::sqrt(h));
    }

    double initial_bearing(const GeoPosition &a, const GeoPosition &b) noexcept
    {
        const double p1 = a.lat * kDeg;
        const double p2 = b.lat * kDeg;
        const double dl = (b.lon - a.lon) * kDeg;
        const double y = std::sin(dl) * std::cos(p2);
        const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
        return std::atan2(y, x);
    }

    GeoPosition step_towards(const GeoPosition &pos, const GeoPosition &dest, double speed, double dt) noexcept
    {
        const double remaining = haversine_distance(pos, dest);
        const double step = speed * dt;
        if (remaining <= step)
            return dest;

        const double theta = initial_bearing(pos, dest);
        const double delta = step / kEarthRadius;
        const double p1 = pos.lat * kDeg;
        const double l1 = pos.lon * kDeg;
        const double p2 = std::asin(std::sin(p1) * std::cos(delta) + std::cos(p1) * std::sin(delta) * std::cos(theta));
        const double l2 = l1 + std::atan2(std::sin(theta) * std::sin(delta) * std::cos(p1),
                                          std::cos(delta) - std::sin(p1) * std::sin(p2));
        return GeoPosition{p2 / kDeg, wrap_lon_degrees(l2 / kDeg), pos.alt};
    }

    bool segment_intersects_disk(const GeoPosition &a, const GeoPosition &b, const GeoPosition &center, double radius) noexcept
    {
        const double lat0 = 0.5 * (a.lat + b.lat) * kDeg;
        const double lon0 = a.lon * kDeg + 0.5 * wrap_pi((b.lon - a.lon) * kDeg);
        const double kx = kEarthRadius * std::cos(lat0);
        auto project = [&](const GeoPosition &p)
        {
            return Planar{kx * wrap_pi(p.lon * kDeg - lon0), kEarthRadius * (p.lat * kDeg - lat0)};
        };

        const Planar pa = project(a);
        const Planar pb = project(b);
        const Planar pc = project(center);
        const double dx = pb.x - pa.x;
        const double dy = pb.y - pa.y;
        const double len2 = dx * dx + dy * dy;
        double t = 0.0;
        if (len2 > 0.0)
            t = std::clamp(((pc.x - pa.x) * dx + (pc.y - pa.y) * dy) / len2, 0.0, 1.0);
        const double ex = pa.x + t * dx - pc.x;
        const double ey = pa.y + t * dy - pc.y;
        return std::hypot(ex, ey) <= radius;
    }

    double energy_cost(const GeoPosition &from, const GeoPosition &to, std::span<const HazardSpec> hazards,
                       const EnergyModel &model) noexcept
    {
        double cost = haversine_distance(from, to) * model.joules_per_meter;
        for (const auto &h : hazards)
        {
            if (segment_intersects_disk(from, to, h.center, h.radius))
                cost += h.penalty;
        }
        return cost;
    }
}
