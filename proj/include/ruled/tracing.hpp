#pragma once

#include <iosfwd>
#include <vector>

#include "ruled/ruling_field.hpp"

namespace ruled {

enum class StopReason { Boundary, StopEdge, Singularity, MaxLength };

const char* to_string(StopReason r);

struct CurveEnd {
    StopReason reason = StopReason::Singularity;
    int edge = -1;  // edge the curve stopped on, -1 if none
};

/// Polyline traced along a ruling field. Segment i joins points[i] and
/// points[i+1] inside faces[i]; point_edges[i] is the mesh edge carrying
/// points[i] (-1 for a seed in a face interior).
struct IntegralCurve {
    std::vector<Vec3> points;
    std::vector<int> faces;
    std::vector<int> point_edges;
    CurveEnd start;
    CurveEnd end;
    int seed_index = 0;  // index of the seed in `points`

    double length() const;
    bool truncated() const { return start.reason == StopReason::MaxLength || end.reason == StopReason::MaxLength; }
};

struct TraceSeed {
    int face = -1;
    Vec3 point;
    int edge = -1;  // edge of `face` carrying the seed, or -1
};

/// Traces the field in both directions from the seed. Curves stop on boundary
/// edges, on edges flagged in `stop_edges`, at field singularities, or once
/// they are longer than `max_length`. Hitting a vertex nudges the crossing point
/// 1e-7 edge lengths into the edge interior.
IntegralCurve trace_curve(const TriangleMesh& mesh, const RulingField& field, const TraceSeed& seed,
                          const std::vector<bool>& stop_edges, double max_length);

/// Writes curves as OBJ polylines (`l` records).
void write_curves_obj(std::ostream& out, const std::vector<IntegralCurve>& curves);

} // namespace ruled
