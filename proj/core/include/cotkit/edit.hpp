#pragma once

#include "cotkit/attribution.hpp"
#include "cotkit/directions.hpp"
#include "cotkit/model.hpp"

#include <string>
#include <vector>

namespace cotkit {

// W <- W (I - v v^T) for a head's output-projection slice (rows are
// d-vectors). Row dots run in double so the result matches the algebraic
// form well below test tolerances; the sign of v is immaterial.
Mat project_out_direction(const Mat & w_slice, const std::vector<float> & v_unit);

struct EditedHeadReport {
    int    layer = 0;
    int    head  = 0;
    double frobenius_delta = 0.0;
};

struct EditReport {
    std::vector<EditedHeadReport> edited_heads;
    size_t edited_param_count = 0;
    size_t total_param_count  = 0;
    double fraction_edited    = 0.0;
    std::string plan_hash;
    std::string directions_hash;
};

// Applies the plan to a copy of the model: rows [head*d_h, (head+1)*d_h) of
// each listed layer's wo are projected orthogonal to that layer's unit attn
// direction. Everything not named by the plan is byte-identical.
std::pair<Model, EditReport> apply_edit_plan(const Model & model, const EditPlan & plan,
                                             const DirectionSet & dirs,
                                             const std::string & timestamp = "1970-01-01T00:00:00Z");

} // namespace cotkit
