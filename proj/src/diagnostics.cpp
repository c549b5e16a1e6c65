#include "smoothac/diagnostics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "smoothac/specnorm.hpp"

namespace smoothac {

namespace {

template <typename P>
double grad_norm_impl(const std::vector<P*>& params) {
    double total = 0.0;
    for (const Parameter* p : params) {
        if (!p->has_grad()) throw ContractError("grad_norm: parameter '" + p->name + "' has no gradient");
        for (double g : p->grad.data()) total += g * g;
    }
    return std::sqrt(total);
}

std::string cell(double x) { return std::isfinite(x) ? format_double(x) : std::string(); }

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

double grad_norm(const std::vector<Parameter*>& params) { return grad_norm_impl(params); }
double grad_norm(const std::vector<const Parameter*>& params) { return grad_norm_impl(params); }

std::vector<SingularValueRow> track_singular_values(const Network& net, const std::string& network_name) {
    std::vector<SingularValueRow> rows;
    for (const LinearLayer* l : net.linear_layers()) {
        SingularValueRow r;
        r.network = network_name;
        r.layer = l->name();
        r.sn_active = l->sn.has_value();
        r.sigma_hat = l->sn ? l->sn->sigma_hat : 0.0;
        r.sigma_exact = exact_sigma_max(l->weight.value);
        r.sigma_effective = l->sn ? exact_sigma_max(l->effective_weight()) : r.sigma_exact;
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<EvalPoint> crash_hold(const std::vector<EvalPoint>& series, std::optional<std::int64_t> crash_step) {
    if (!crash_step) return series;
    double held = 0.0;
    for (const EvalPoint& p : series) {
        if (p.step <= *crash_step) held = p.score;
    }
    std::vector<EvalPoint> out = series;
    for (EvalPoint& p : out) {
        if (p.step > *crash_step) p.score = held;
    }
    return out;
}

std::vector<std::string> metrics_columns(const std::vector<std::string>& sigma_names) {
    std::vector<std::string> cols{"step",      "updated",          "critic_loss",     "actor_loss",
                                  "alpha_loss", "alpha",            "critic_grad_norm", "actor_grad_norm",
                                  "episode_return", "event"};
    for (const std::string& n : sigma_names) cols.push_back("sigma_hat:" + n);
    return cols;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::vector<std::string> sigma_names)
    : out_(path, std::ios::binary | std::ios::trunc), sigma_names_(std::move(sigma_names)) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
    const auto cols = metrics_columns(sigma_names_);
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << '\n';
}

void MetricsWriter::write(const MetricsRecord& r) {
    if (last_step_ && r.step <= *last_step_) throw ContractError("metrics: steps must increase strictly");
    if (r.sigma_hat.size() != sigma_names_.size()) throw ContractError("metrics: sigma_hat width mismatch");
    const bool crash = r.event == "crash";
    std::vector<double> numeric{r.critic_loss, r.actor_loss, r.alpha_loss, r.alpha, r.critic_grad_norm, r.actor_grad_norm};
    numeric.insert(numeric.end(), r.sigma_hat.begin(), r.sigma_hat.end());
    if (r.episode_return) numeric.push_back(*r.episode_return);
    if (!crash) {
        for (double x : numeric) {
            if (!std::isfinite(x)) throw ContractError("metrics: non-finite field outside a crash row");
        }
    }
    out_ << r.step << ',' << (r.updated ? 1 : 0) << ',' << cell(r.critic_loss) << ',' << cell(r.actor_loss) << ','
         << cell(r.alpha_loss) << ',' << cell(r.alpha) << ',' << cell(r.critic_grad_norm) << ','
         << cell(r.actor_grad_norm) << ',' << (r.episode_return ? cell(*r.episode_return) : std::string()) << ','
         << r.event;
    for (double s : r.sigma_hat) out_ << ',' << cell(s);
    out_ << '\n';
    last_step_ = r.step;
    ++rows_;
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return i;
    }
    throw std::out_of_range("csv: no column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path.string());
    t.columns = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto row = split_line(line);
        if (row.size() != t.columns.size()) throw std::runtime_error("csv: ragged row in " + path.string());
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

std::string format_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return {buf, ptr};
}

}  // namespace smoothac
