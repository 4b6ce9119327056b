#include "cotkit/edit.hpp"

#include <cmath>

namespace cotkit {

Mat project_out_direction(const Mat & w_slice, const std::vector<float> & v_unit) {
    const int d = int(v_unit.size());
    if (w_slice.cols != d) {
        throw error("project_out_direction: row length " + std::to_string(w_slice.cols) +
                    " does not match direction length " + std::to_string(d));
    }
    const float n = norm2(v_unit.data(), d);
    if (std::fabs(n - 1.0f) > 1e-6f) {
        throw error("project_out_direction: direction is not unit length (|v| = " + fmt_float(n) +
                    ")");
    }
    // renormalize in double so the elimination leaves no O(|1 - |v|^2|)
    // residual along the direction
    std::vector<double> vd(d);
    double              nsq = 0.0;
    for (int i = 0; i < d; ++i) {
        nsq += double(v_unit[i]) * double(v_unit[i]);
    }
    const double inv = 1.0 / std::sqrt(nsq);
    for (int i = 0; i < d; ++i) {
        vd[i] = double(v_unit[i]) * inv;
    }

    Mat out = w_slice;
    for (int r = 0; r < out.rows; ++r) {
        float * row  = out.row(r);
        double  coef = 0.0;
        for (int i = 0; i < d; ++i) {
            coef += double(row[i]) * vd[i];
        }
        for (int i = 0; i < d; ++i) {
            row[i] = float(double(row[i]) - coef * vd[i]);
        }
    }
    return out;
}

std::pair<Model, EditReport> apply_edit_plan(const Model & model, const EditPlan & plan,
                                             const DirectionSet & dirs,
                                             const std::string & timestamp) {
    if (!plan.model_fingerprint.empty() && !model.compatible_with(plan.model_fingerprint)) {
        throw error("apply_edit_plan: plan built for model " + plan.model_fingerprint +
                    ", got " + model.fingerprint);
    }
    if (!dirs.provenance.model_fingerprint.empty() &&
        !model.compatible_with(dirs.provenance.model_fingerprint)) {
        throw error("apply_edit_plan: directions built for model " +
                    dirs.provenance.model_fingerprint + ", got " + model.fingerprint);
    }
    const std::string dhash = directions_hash(dirs);
    if (!plan.directions_fingerprint.empty() && plan.directions_fingerprint != dhash) {
        throw error("apply_edit_plan: plan references directions " + plan.directions_fingerprint +
                    ", got " + dhash);
    }

    const int L  = model.config.n_layers;
    const int H  = model.config.n_heads;
    const int d  = model.config.hidden_dim;
    const int dh = model.config.head_dim;

    for (const EditPlanEntry & e : plan.entries) {
        if (e.layer < 0 || e.layer >= L || e.head < 0 || e.head >= H) {
            throw error("apply_edit_plan: entry (" + std::to_string(e.layer) + "," +
                        std::to_string(e.head) + ") out of range");
        }
        if (dirs.attn_degenerate[e.layer]) {
            throw error("apply_edit_plan: layer " + std::to_string(e.layer) +
                        " has a degenerate attn direction");
        }
        for (const EditPlanEntry & o : plan.entries) {
            if (&o != &e && o.layer == e.layer && o.head == e.head) {
                throw error("apply_edit_plan: duplicate entry (" + std::to_string(e.layer) + "," +
                            std::to_string(e.head) + ")");
            }
        }
    }

    Model edited = model;
    EditReport report;
    report.total_param_count = model.total_params();
    report.plan_hash         = fnv1a_hex(save_edit_plan_json(plan));
    report.directions_hash   = dhash;

    for (const EditPlanEntry & e : plan.entries) {
        Mat & wo = edited.layers[e.layer].wo;

        Mat slice(dh, d);
        for (int r = 0; r < dh; ++r) {
            std::memcpy(slice.row(r), wo.row(e.head * dh + r), size_t(d) * sizeof(float));
        }
        const Mat projected = project_out_direction(slice, dirs.v_attn_unit[e.layer]);

        double fro = 0.0;
        for (int r = 0; r < dh; ++r) {
            const float * before = slice.row(r);
            const float * after  = projected.row(r);
            for (int i = 0; i < d; ++i) {
                const double diff = double(after[i]) - double(before[i]);
                fro += diff * diff;
            }
            std::memcpy(wo.row(e.head * dh + r), after, size_t(d) * sizeof(float));
        }
        report.edited_heads.push_back({e.layer, e.head, std::sqrt(fro)});
        report.edited_param_count += size_t(dh) * size_t(d);
    }
    report.fraction_edited =
        double(report.edited_param_count) / double(report.total_param_count);

    if (!plan.entries.empty()) {
        EditLineage lineage;
        lineage.base_fingerprint = model.base_fingerprint();
        lineage.plan_hash        = report.plan_hash;
        lineage.directions_hash  = report.directions_hash;
        lineage.timestamp        = timestamp;
        edited.lineage           = lineage;
        edited.refresh_fingerprint();
    }
    return {std::move(edited), std::move(report)};
}

} // namespace cotkit
