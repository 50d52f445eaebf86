#include <cmath>
#include <cstdio>
#include <fstream>

#include "bpnn/model.hpp"

namespace bpnn {

namespace {

constexpr std::size_t kEvalChunk = 256;

std::size_t argmax_row(const Tensor& t, std::size_t row) {
    const std::size_t c = t.extent(1);
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (t(row, j) > t(row, best)) best = j;
    return best;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
    Tensor y({labels.size(), classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= classes) {
            throw IndexError("label " + std::to_string(l) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
        y(i, static_cast<std::size_t>(l)) = 1.0;
    }
    return y;
}

[[noreturn]] void diagnose_nonfinite(Model& model, const Tensor& batch) {
    Tensor cur = batch;
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        cur = model.layer(i).forward(cur);
        if (!cur.all_finite()) {
            throw NumericError("non-finite activations after layer '" + model.layer(i).name() +
                               "'");
        }
    }
    throw NumericError("non-finite loss with finite activations");
}

}  // namespace

BatchLoss batch_loss(Model& model, const Model::ForwardResult& fwd,
                     const std::vector<int>& labels, const std::optional<Tensor>& targets) {
    if (model.loss() == LossKind::cross_entropy) {
        LossValue lv = cross_entropy(fwd.logits, labels);
        return {lv.value, std::move(lv.grad), true};
    }
    Tensor y = targets ? *targets : one_hot(labels, fwd.output.extent(1));
    LossValue lv = mse_batch(fwd.output, y.reshaped(fwd.output.shape()));
    return {lv.value, std::move(lv.grad), false};
}

EvalMetrics evaluate(Model& model, const Dataset& data) {
    const std::size_t n = data.size();
    if (n == 0) throw ValueError("evaluate: empty dataset");
    if (!model.shapes_resolved()) model.resolve_shapes(data.sample_shape());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(n, start + kEvalChunk); ++i) idx.push_back(i);
        Dataset chunk = subset(data, idx);
        Model::ForwardResult fwd = model.forward(chunk.features);
        BatchLoss bl = batch_loss(model, fwd, chunk.labels, chunk.targets);
        loss_sum += bl.value * static_cast<double>(idx.size());
        if (!chunk.labels.empty()) {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (argmax_row(fwd.output, i) == static_cast<std::size_t>(chunk.labels[i]))
                    ++correct;
            }
        }
    }
    EvalMetrics m;
    m.loss = loss_sum / static_cast<double>(n);
    m.accuracy = data.labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
    return m;
}

TrainResult train(Model& model, const Dataset& train_data, const std::optional<Dataset>& val,
                  const TrainConfig& cfg) {
    if (train_data.size() == 0) throw ValueError("train: empty dataset");
    if (!model.shapes_resolved()) model.resolve_shapes(train_data.sample_shape());

    Dataset fit;
    Dataset carved_val;
    const Dataset* val_ptr = nullptr;
    if (val) {
        fit = train_data;
        val_ptr = &*val;
    } else if (cfg.val_fraction > 0.0 && train_data.size() > 1) {
        std::tie(fit, carved_val) = split_train_val(train_data, cfg.val_fraction,
                                                    cfg.shuffle_seed ^ 0x517CC1B727220A95ULL);
        val_ptr = &carved_val;
    } else {
        fit = train_data;
    }

    Optimizer opt(cfg.optimizer);
    opt.bind(model.params());

    TrainResult res;
    res.best_params = model.snapshot();
    res.best_epoch = 0;
    res.best_val_loss = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng erng(cfg.shuffle_seed ^ (0x9E3779B97F4A7C15ULL * epoch));
        for (const auto& idx : batches(fit.size(), cfg.batch_size, erng)) {
            Dataset b = subset(fit, idx);
            Model::ForwardResult fwd = model.forward(b.features);
            BatchLoss bl = batch_loss(model, fwd, b.labels, b.targets);
            if (!std::isfinite(bl.value)) diagnose_nonfinite(model, b.features);
            model.backward(bl.upstream, bl.from_logits);
            opt.step();
        }
        const EvalMetrics tm = evaluate(model, train_data);
        const EvalMetrics vm = val_ptr ? evaluate(model, *val_ptr) : tm;
        res.history.push_back({epoch, tm.loss, tm.accuracy, vm.loss, vm.accuracy});
        if (vm.loss < res.best_val_loss) {
            res.best_val_loss = vm.loss;
            res.best_params = model.snapshot();
            res.best_epoch = epoch;
        }
    }
    return res;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    char buf[256];
    for (const EpochMetrics& m : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.12g,%.12g\n", m.epoch, m.train_loss,
                      m.train_acc, m.val_loss, m.val_acc);
        out << buf;
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace bpnn
