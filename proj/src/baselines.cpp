#include "peee/baselines.hpp"

#include "peee/error.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <thread>

namespace peee {

FitResult complete_case_fit(const ObservationTable& table, const Formula& analysis, Family family,
                            const GlmOptions& options) {
    const DesignBuilder builder(analysis, table);
    const std::vector<std::size_t> rows = table.complete_rows();
    const DesignMatrix x = builder.build(rows);
    const Eigen::VectorXd y = analysis_response(builder, family, rows);
    return fit_weighted(family, x, y, Eigen::VectorXd::Ones(x.rows()), nullptr, options);
}

FitResult mib_fit(const ObservationTable& table, const Formula& analysis, Family family,
                  const IncompleteSpec& spec, int draws, RngStream& rng, const GlmOptions& options) {
    if (draws < 1)
        throw ConfigError("type B imputation needs at least one draw");
    if (spec.kind == GammaKind::linear_mean)
        throw ConfigError("type B imputation draws need a full conditional; use linear_mean_variance");
    auto shared = std::make_shared<const ObservationTable>(table);
    const GammaFit g = fit_gamma(shared, spec.model, spec.kind, options);
    const std::vector<std::size_t> missing = table.incomplete_rows();
    const Eigen::MatrixXd u = draw_uniforms(rng, missing.size(), draws);

    const Column& col = table.column(g.incomplete_column);
    std::vector<double> imputed(table.rows() * static_cast<std::size_t>(draws));
    std::vector<std::size_t> rows(imputed.size());
    for (int s = 0; s < draws; ++s) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < table.rows(); ++i) {
            const std::size_t r = static_cast<std::size_t>(s) * table.rows() + i;
            rows[r] = i;
            imputed[r] = table.observed(i) ? col.values[i]
                                           : g.inverse_cdf(g.gamma, i, u(static_cast<Eigen::Index>(k++), s));
        }
    }
    Overrides ov;
    ov[g.incomplete_column] = std::move(imputed);
    const DesignBuilder builder(analysis, shared);
    const DesignMatrix x = builder.build(rows, ov);
    const Eigen::VectorXd y = analysis_response(builder, family, rows, ov);
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(x.rows(), 1.0 / draws);
    return fit_weighted(family, x, y, w, nullptr, options);
}

BootstrapResult bootstrap_variance(const ObservationTable& table, const Estimator& estimator, int B,
                                   const RngStream& rng, const BootstrapOptions& options) {
    if (B < 2)
        throw ConfigError(fmt::format("bootstrap needs B >= 2, got {}", B));
    const std::size_t n = table.rows();
    std::vector<std::optional<Eigen::VectorXd>> results(static_cast<std::size_t>(B));
    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr fatal;

    const auto worker = [&] {
        while (true) {
            const int b = next.fetch_add(1);
            if (b >= B)
                return;
            RngStream stream = rng.derive(static_cast<std::uint64_t>(b));
            std::vector<std::size_t> idx(n);
            for (auto& i : idx)
                i = static_cast<std::size_t>(stream.below(n));
            try {
                const ObservationTable replicate = table.select_rows(idx, true);
                Eigen::VectorXd est = estimator(replicate);
                if (est.allFinite())
                    results[static_cast<std::size_t>(b)] = std::move(est);
            } catch (const Error&) {
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!fatal)
                    fatal = std::current_exception();
            }
        }
    };
    const int threads = std::max(1, std::min(options.threads, B));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    if (fatal)
        std::rethrow_exception(fatal);

    BootstrapResult out;
    out.B = B;
    Eigen::Index d = -1;
    for (int b = 0; b < B; ++b) {
        if (!results[static_cast<std::size_t>(b)]) {
            out.failed_replicates.push_back(b);
            continue;
        }
        const Eigen::Index size = results[static_cast<std::size_t>(b)]->size();
        if (d >= 0 && size != d)
            throw ConfigError("bootstrap estimator returned vectors of different lengths");
        d = size;
    }
    out.failures = static_cast<int>(out.failed_replicates.size());
    const int ok = B - out.failures;
    if (ok < 2 || ok < options.min_success_fraction * B)
        throw NumericError(fmt::format("bootstrap: only {} of {} replicates succeeded", ok, B));
    out.replicate_estimates.resize(ok, d);
    Eigen::Index r = 0;
    for (const auto& res : results)
        if (res)
            out.replicate_estimates.row(r++) = res->transpose();
    const Eigen::RowVectorXd mean = out.replicate_estimates.colwise().mean();
    const Eigen::MatrixXd centered = out.replicate_estimates.rowwise() - mean;
    out.se = (centered.array().square().colwise().sum() / static_cast<double>(ok - 1)).sqrt().transpose();
    return out;
}

}  // namespace peee
