#pragma once

#include "swarm/scenario.hpp"

#include <span>

namespace swarm
{
    inline constexpr double kEarthRadius = 6371008.8; // mean radius, meters

    struct EnergyModel
    {
        double joules_per_meter = 1.0;
    };

    // Great-circle distance in meters; altitude is ignored.
    double haversine_distance(const GeoPosition &a, const GeoPosition &b) noexcept;

    // Initial great-circle bearing from a to b, radians clockwise from north.
    double initial_bearing(const GeoPosition &a, const GeoPosition &b) noexcept;

    // Moves pos along the great circle toward dest by min(speed * dt, remaining).
    // Returns dest exactly once it is within one step.
    GeoPosition step_towards(const GeoPosition &pos, const GeoPosition &dest, double speed, double dt) noexcept;

    // Minimum distance from center to the segment a-b is <= radius, measured in an
    // equirectangular projection about the segment midpoint.
    bool segment_intersects_disk(const GeoPosition &a, const GeoPosition &b, const GeoPosition &center, double radius) noexcept;

    // Distance times joules_per_meter, plus the penalty of every hazard whose
    // disk the straight segment from -> to touches.
    double energy_cost(const GeoPosition &from, const GeoPosition &to, std::span<const HazardSpec> hazards,
                       const EnergyModel &model = {}) noexcept;
}
