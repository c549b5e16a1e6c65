#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "smoothac/autodiff.hpp"
#include "smoothac/layers.hpp"

namespace smoothac {

// Global L2 norm over the concatenated gradients. ContractError if any
// parameter has no gradient.
double grad_norm(const std::vector<Parameter*>& params);
double grad_norm(const std::vector<const Parameter*>& params);

inline constexpr std::int64_t kSigmaExactInterval = 1000;

struct SingularValueRow {
    std::string network;
    std::string layer;
    bool sn_active = false;
    double sigma_hat = 0.0;        // power-iteration estimate; 0 when SN is off
    double sigma_exact = 0.0;      // exact sigma_max of the raw weight
    double sigma_effective = 0.0;  // exact sigma_max of the applied weight
};

// One row per linear layer, in Network::linear_layers() order.
std::vector<SingularValueRow> track_singular_values(const Network& net, const std::string& network_name);
[[nodiscard]] inline bool sigma_exact_due(std::int64_t step, std::int64_t interval = kSigmaExactInterval) {
    return interval > 0 && step % interval == 0;
}

struct EvalPoint {
    std::int64_t step = 0;
    double score = 0.0;
    bool operator==(const EvalPoint&) const = default;
};

// Points after `crash_step` take the last score at or before it, or 0 when no
// evaluation preceded the crash.
std::vector<EvalPoint> crash_hold(const std::vector<EvalPoint>& series, std::optional<std::int64_t> crash_step);

// metrics.csv columns, in order:
//   step, updated, critic_loss, actor_loss, alpha_loss, alpha,
//   critic_grad_norm, actor_grad_norm, episode_return, event,
//   then one sigma_hat:<network>/<layer> column per SN layer.
// Empty cells mean "not available". A crash row carries event=crash.
struct MetricsRecord {
    std::int64_t step = 0;
    bool updated = false;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double alpha = 0.0;
    double critic_grad_norm = 0.0;
    double actor_grad_norm = 0.0;
    std::optional<double> episode_return;
    std::string event;
    std::vector<double> sigma_hat;
};

std::vector<std::string> metrics_columns(const std::vector<std::string>& sigma_names);

class MetricsWriter {
public:
    MetricsWriter(const std::filesystem::path& path, std::vector<std::string> sigma_names);

    // ContractError on non-increasing steps, wrong sigma width, or non-finite
    // fields outside a crash row.
    void write(const MetricsRecord& r);
    void flush() { out_.flush(); }
    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }

private:
    std::ofstream out_;
    std::vector<std::string> sigma_names_;
    std::optional<std::int64_t> last_step_;
    std::size_t rows_ = 0;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const;  // throws if absent
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Shortest round-trip decimal form.
std::string format_double(double x);

}  // namespace smoothac
