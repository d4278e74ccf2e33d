#include "sagpool/gradcheck.hpp"

#include "sagpool/error.hpp"

#include <algorithm>
#include <cmath>

namespace sagpool {

namespace {

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

} // namespace

GradcheckReport check_gradients(const std::vector<Tensor>& leaves,
                                const std::function<Tensor()>& build_loss, double tolerance,
                                double step) {
    GradcheckReport report;
    report.tolerance = tolerance;

    std::vector<Tensor> checked;
    for (const Tensor& l : leaves)
        if (l.requires_grad()) checked.push_back(l);

    for (Tensor& l : checked) l.zero_grad();
    backward(build_loss());
    std::vector<DenseMatrix> analytic;
    analytic.reserve(checked.size());
    for (Tensor& l : checked) analytic.push_back(l.grad());

    for (size_t k = 0; k < checked.size(); ++k) {
        DenseMatrix& v = checked[k].raw_value();
        for (size_t i = 0; i < v.data.size(); ++i) {
            const double keep = v.data[i];
            double plus = 0.0;
            double minus = 0.0;
            {
                NoGradGuard ng;
                v.data[i] = keep + step;
                plus = build_loss().value().at(0, 0);
                v.data[i] = keep - step;
                minus = build_loss().value().at(0, 0);
            }
            v.data[i] = keep;
            const double fd = (plus - minus) / (2.0 * step);
            report.max_rel_error = std::max(report.max_rel_error, rel_err(analytic[k].data[i], fd));
            ++report.entries_checked;
        }
    }
    report.passed = report.entries_checked > 0 && report.max_rel_error <= tolerance;
    return report;
}

GradcheckReport check_model_gradients(const Model& model,
                                      const std::function<GraphBatch()>& sample_batch,
                                      double tolerance, double step, double min_margin,
                                      int max_resamples) {
    // A wrong gradient formula fails on every batch; a finite difference that
    // happened to straddle a relu kink or selection boundary fails only on
    // batches that sat close to one. So a failure is only final when the
    // forward pass kept a margin from every kink; otherwise the batch is
    // resampled and the failure attributed to the kink.
    GradcheckReport report;
    report.tolerance = tolerance;
    int kink_retries = 0;

    std::vector<Tensor> leaves;
    for (const NamedParam& p : model.parameters()) leaves.push_back(p.tensor);

    for (int attempt = 0; attempt <= max_resamples; ++attempt) {
        const GraphBatch batch = sample_batch();
        auto loss = [&model, &batch] { return cross_entropy(model.logits(batch), batch.labels); };

        KinkMargins margins;
        set_active_margins(&margins);
        try {
            (void)loss();
        } catch (...) {
            set_active_margins(nullptr);
            throw;
        }
        set_active_margins(nullptr);

        report = check_gradients(leaves, loss, tolerance, step);
        report.resamples = kink_retries;
        if (report.passed || margins.min() >= min_margin) return report;
        if (attempt < max_resamples) ++kink_retries; // a fresh batch follows
    }
    report.passed = false; // failed near a kink on every attempt
    return report;
}

} // namespace sagpool
