#include "bpnn/analysis.hpp"

#include <cmath>
#include <ostream>

namespace bpnn {

CostReport cost_report(Model& model, const Shape& input, std::size_t batch,
                       std::size_t elem_width) {
    if (!model.shapes_resolved() || model.input_shape() != input) model.resolve_shapes(input);
    CostReport rep;
    Shape cur = input;
    std::optional<std::size_t> last_parameterized;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        Layer& l = model.layer(i);
        CostRow row;
        row.layer = l.name();
        row.alpha = l.alpha();
        row.mode = projection_mode_name(l.mode());
        row.params = 0;
        for (const ParamRef& p : l.params()) row.params += p.value->size();
        row.flops = l.forward_flops(cur);
        cur = model.layer_output_shapes()[i];
        row.activation_bytes =
            static_cast<std::uint64_t>(batch) * shape_elems(cur) * elem_width;
        if (row.params > 0) last_parameterized = i;
        rep.rows.push_back(std::move(row));
    }
    for (const CostRow& r : rep.rows) {
        rep.total_params += r.params;
        rep.total_flops += r.flops;
        rep.total_activation_bytes += r.activation_bytes;
    }
    rep.exc_params = rep.total_params;
    rep.exc_flops = rep.total_flops;
    rep.exc_activation_bytes = rep.total_activation_bytes;
    if (last_parameterized) {
        const CostRow& last = rep.rows[*last_parameterized];
        rep.exc_params -= last.params;
        rep.exc_flops -= last.flops;
        rep.exc_activation_bytes -= last.activation_bytes;
    }
    return rep;
}

void write_cost_csv(std::ostream& out, const CostReport& report, bool exclude_last) {
    out << "layer,mode,alpha,params,flops,activation_bytes\n";
    for (const CostRow& r : report.rows) {
        out << r.layer << ',' << r.mode << ',' << r.alpha << ',' << r.params << ',' << r.flops
            << ',' << r.activation_bytes << '\n';
    }
    out << "total,,," << report.total_params << ',' << report.total_flops << ','
        << report.total_activation_bytes << '\n';
    if (exclude_last) {
        out << "total_exc_last,,," << report.exc_params << ',' << report.exc_flops << ','
            << report.exc_activation_bytes << '\n';
    }
}

namespace {

double relative_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

struct ProbeResult {
    double loss;
    double kink_margin;
};

template <class LossFn>
GradCheckReport run_check(const std::vector<ParamRef>& refs,
                          const std::vector<Tensor>& analytic, LossFn probe, double step) {
    GradCheckReport rep;
    for (std::size_t p = 0; p < refs.size(); ++p) {
        GradCheckEntry entry;
        entry.tensor = refs[p].name;
        Tensor& w = *refs[p].value;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + step;
            const ProbeResult up = probe();
            w[i] = saved - step;
            const ProbeResult down = probe();
            w[i] = saved;
            if (!std::isfinite(up.loss) || !std::isfinite(down.loss)) {
                throw NumericError("grad check: non-finite loss while probing '" +
                                   entry.tensor + "'");
            }
            if (std::min(up.kink_margin, down.kink_margin) < 10.0 * step) {
                ++entry.kink_skipped;
                continue;
            }
            const double numeric = (up.loss - down.loss) / (2.0 * step);
            entry.worst_rel = std::max(entry.worst_rel, relative_error(analytic[p][i], numeric));
            ++entry.checked;
        }
        rep.worst_rel = std::max(rep.worst_rel, entry.worst_rel);
        rep.checked += entry.checked;
        rep.kink_skipped += entry.kink_skipped;
        rep.entries.push_back(std::move(entry));
    }
    return rep;
}

}  // namespace

GradCheckReport grad_check(Model& model, const Tensor& input, const std::vector<int>& labels,
                           const std::optional<Tensor>& targets, double step) {
    Model::ForwardResult fwd = model.forward(input);
    BatchLoss bl = batch_loss(model, fwd, labels, targets);
    if (!std::isfinite(bl.value)) throw NumericError("grad check: non-finite loss at the base point");
    model.backward(bl.upstream, bl.from_logits);

    std::vector<ParamRef> refs = model.params();
    std::vector<Tensor> analytic;
    analytic.reserve(refs.size());
    for (const ParamRef& r : refs) analytic.push_back(*r.grad);

    auto probe = [&]() -> ProbeResult {
        Model::ForwardResult f = model.forward(input);
        BatchLoss l = batch_loss(model, f, labels, targets);
        return {l.value, model.relu_kink_margin()};
    };
    return run_check(refs, analytic, probe, step);
}

GradCheckReport grad_check_layer(Layer& layer, const Tensor& input, Rng& rng, double step) {
    Tensor base = layer.forward(input);
    Tensor target(base.shape());
    for (std::size_t i = 0; i < target.size(); ++i) target[i] = rng.normal();

    layer.zero_grads();
    layer.backward(sub(base, target));

    std::vector<ParamRef> refs = layer.params();
    std::vector<Tensor> analytic;
    analytic.reserve(refs.size());
    for (const ParamRef& r : refs) analytic.push_back(*r.grad);

    auto probe = [&]() -> ProbeResult {
        Tensor h = layer.forward(input);
        return {0.5 * sub(h, target).squared_norm(), layer.relu_kink_margin()};
    };
    return run_check(refs, analytic, probe, step);
}

double equivalence_check(Layer& layer, const Shape& in_shape, std::size_t trials, Rng& rng) {
    std::unique_ptr<Layer> twin = layer.expanded();
    if (!twin) {
        throw UsageError("equivalence check: layer '" + layer.name() +
                         "' has no full-projection expansion");
    }
    double worst = 0.0;
    if (layer.type() == "embedding") {
        auto& emb = dynamic_cast<EmbeddingLayer&>(layer);
        auto& full = dynamic_cast<EmbeddingLayer&>(*twin);
        for (std::size_t id = 0; id < emb.vocab(); ++id) {
            worst = std::max(worst, max_abs_diff(emb.lookup(id), full.lookup(id)));
        }
        return worst;
    }
    Shape batch_shape{1};
    batch_shape.insert(batch_shape.end(), in_shape.begin(), in_shape.end());
    for (std::size_t t = 0; t < trials; ++t) {
        Tensor x(batch_shape);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
        worst = std::max(worst, max_abs_diff(layer.forward(x), twin->forward(x)));
    }
    return worst;
}

}  // namespace bpnn
