#include "fedema/runner.hpp"

#include "fedema/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fedema::runner {

namespace fs = std::filesystem;
using protocol::HyperParams;
using protocol::Method;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(s);
    while (std::getline(ss, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

// Shortest representation that parses back to the same double.
std::string fmt_double(double v) {
    char buf[64];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::logic_error&) {
        throw ParameterError(key + ": '" + v + "' is not a number");
    }
    if (used != v.size()) throw ParameterError(key + ": '" + v + "' is not a number");
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::logic_error&) {
        throw ParameterError(key + ": '" + v + "' is not an integer");
    }
    if (used != v.size()) throw ParameterError(key + ": '" + v + "' is not an integer");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    if (x < 0) throw ParameterError(key + " must be non-negative");
    return static_cast<std::size_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParameterError(key + ": '" + v + "' is not a boolean");
}

std::string rule_text(const agg::AggRule& rule) {
    if (rule.rule == agg::Rule::trimmed) return "trimmed:" + fmt_double(rule.trim_frac);
    return rule.name();
}

using HpSetter = std::function<void(HyperParams&, const std::string& key, const std::string& value)>;

const std::map<std::string, HpSetter>& hp_setters() {
    static const std::map<std::string, HpSetter> setters = {
        {"T", [](HyperParams& h, const auto& k, const auto& v) { h.temperature = to_double(k, v); }},
        {"beta", [](HyperParams& h, const auto& k, const auto& v) { h.beta = to_double(k, v); }},
        {"mu_anchor", [](HyperParams& h, const auto& k, const auto& v) { h.mu_anchor = to_double(k, v); }},
        {"rho", [](HyperParams& h, const auto& k, const auto& v) { h.rho = to_double(k, v); }},
        {"E", [](HyperParams& h, const auto& k, const auto& v) { h.local_epochs = static_cast<int>(to_int(k, v)); }},
        {"C_part", [](HyperParams& h, const auto& k, const auto& v) { h.participation = to_double(k, v); }},
        {"lr_local", [](HyperParams& h, const auto& k, const auto& v) { h.lr_local = to_double(k, v); }},
        {"lr_server", [](HyperParams& h, const auto& k, const auto& v) { h.lr_server = to_double(k, v); }},
        {"kd_steps", [](HyperParams& h, const auto& k, const auto& v) { h.kd_steps = static_cast<int>(to_int(k, v)); }},
        {"warmup_rounds",
         [](HyperParams& h, const auto& k, const auto& v) { h.warmup_rounds = static_cast<int>(to_int(k, v)); }},
        {"agg", [](HyperParams& h, const auto&, const auto& v) { h.agg_rule = agg::parse_rule(v); }},
        {"prox_mu", [](HyperParams& h, const auto& k, const auto& v) { h.prox_mu = to_double(k, v); }},
        {"momentum", [](HyperParams& h, const auto& k, const auto& v) { h.server_momentum = to_double(k, v); }},
        {"batch_size", [](HyperParams& h, const auto& k, const auto& v) { h.batch_size = to_size(k, v); }},
        {"proxy_replication",
         [](HyperParams& h, const auto& k, const auto& v) { h.proxy_replication = static_cast<int>(to_int(k, v)); }},
        {"count_index_bytes",
         [](HyperParams& h, const auto& k, const auto& v) { h.count_index_bytes = to_bool(k, v); }},
    };
    return setters;
}

std::vector<std::pair<std::string, std::string>> hp_fields(const HyperParams& h) {
    return {{"T", fmt_double(h.temperature)},
            {"beta", fmt_double(h.beta)},
            {"mu_anchor", fmt_double(h.mu_anchor)},
            {"rho", fmt_double(h.rho)},
            {"E", std::to_string(h.local_epochs)},
            {"C_part", fmt_double(h.participation)},
            {"lr_local", fmt_double(h.lr_local)},
            {"lr_server", fmt_double(h.lr_server)},
            {"kd_steps", std::to_string(h.kd_steps)},
            {"warmup_rounds", std::to_string(h.warmup_rounds)},
            {"agg", rule_text(h.agg_rule)},
            {"prox_mu", fmt_double(h.prox_mu)},
            {"momentum", fmt_double(h.server_momentum)},
            {"batch_size", std::to_string(h.batch_size)},
            {"proxy_replication", std::to_string(h.proxy_replication)},
            {"count_index_bytes", h.count_index_bytes ? "true" : "false"}};
}

template <typename T>
std::string join_list(const std::vector<T>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, std::string>) {
            out += items[i];
        } else {
            out += std::to_string(items[i]);
        }
    }
    return out;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path, std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError(path.string() + " is empty");
    header = split(line, ',');
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != header.size()) throw InputError(path.string() + ": ragged row");
        rows.push_back(std::move(cells));
    }
    return rows;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::size_t DataSpec::total() const {
    return n_total != 0 ? n_total : test_size + proxy_size + static_cast<std::size_t>(std::max(clients, 0)) * n_per_client;
}

HyperParams default_hyperparams(Method kind) {
    HyperParams hp;
    if (kind == Method::feddf) hp.temperature = 3.0;
    return hp;
}

const MethodSpec& ExperimentConfig::method(const std::string& name) const {
    for (const auto& m : methods) {
        if (m.name == name) return m;
    }
    throw ConfigError("no method named '" + name + "'");
}

void ExperimentConfig::validate() const {
    std::vector<std::string> errs;
    if (data.classes < 2) errs.push_back("data.classes must be >= 2");
    if (data.dim < 2) errs.push_back("data.dim must be >= 2");
    if (!(data.class_sep >= 0.0)) errs.push_back("data.class_sep must be >= 0");
    if (data.clients < 1) errs.push_back("data.clients must be >= 1");
    if (!(data.alpha > 0.0)) errs.push_back("data.alpha must be > 0");
    if (data.n_per_client < 1) errs.push_back("data.n_per_client must be >= 1");
    if (data.test_size < 1) errs.push_back("data.test_size must be >= 1");
    if (data.csv.empty()) {
        const std::size_t clients = static_cast<std::size_t>(std::max(data.clients, 0));
        if (data.total() < data.test_size + data.proxy_size + clients * data.n_per_client) {
            errs.push_back("data.n_total too small for test + proxy + clients * n_per_client");
        }
    }
    if (rounds < 1) errs.push_back("run.rounds must be >= 1");
    if (seeds.empty()) errs.push_back("run.seeds must not be empty");
    if (methods.empty()) errs.push_back("run.methods must not be empty");
    if (!(target > 0.0 && target < 1.0)) errs.push_back("run.target must lie in (0, 1)");
    if (ece_bins < 1) errs.push_back("metrics.ece_bins must be >= 1");
    if (!(adversary.fraction >= 0.0 && adversary.fraction < 1.0)) errs.push_back("adversary.fraction must lie in [0, 1)");
    std::set<std::string> names;
    for (const auto& m : methods) {
        if (!names.insert(m.name).second) errs.push_back("duplicate method name '" + m.name + "'");
        for (const auto& e : m.hp.validate()) errs.push_back(m.name + ": " + e);
        if (protocol::uploads_logits(m.kind)) {
            const double exact = m.hp.participation * data.clients;
            const auto participants = static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact)));
            if (m.hp.rho > 0.0 && m.hp.rho <= 1.0 &&
                data::proxy_subset_size(data.proxy_size, m.hp.rho) < participants) {
                errs.push_back(m.name + ": proxy subset ceil(rho * proxy_size) is smaller than the participant count");
            }
        } else if (!client_hidden.empty()) {
            for (std::size_t w : client_hidden) {
                if (w != hidden) {
                    errs.push_back(m.name + ": weight averaging needs every client at model.hidden");
                    break;
                }
            }
        }
    }
    if (!errs.empty()) throw ValidationError(std::move(errs));
}

ExperimentConfig parse_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::vector<std::string> errs;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errs.push_back("line " + std::to_string(lineno) + ": expected key=value");
            continue;
        }
        entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }

    ExperimentConfig cfg;
    // Method list first so per-method keys can be routed.
    std::vector<std::pair<std::string, Method>> declared;
    for (const auto& [k, v] : entries) {
        if (k != "run.methods") continue;
        declared.clear();
        for (const auto& item : split(v, ',')) {
            if (item.empty()) continue;
            const auto colon = item.find(':');
            const std::string name = colon == std::string::npos ? item : item.substr(0, colon);
            const std::string kind = colon == std::string::npos ? item : item.substr(colon + 1);
            try {
                declared.emplace_back(name, protocol::parse_method(kind));
            } catch (const Error& e) {
                errs.push_back(std::string("run.methods: ") + e.what());
            }
        }
    }
    if (declared.empty()) {
        for (const char* m : {"fedema", "feddf", "fedavg", "fedprox", "fedavgm"}) {
            declared.emplace_back(m, protocol::parse_method(m));
        }
    }

    std::map<std::string, HyperParams> hp;
    for (const auto& [name, kind] : declared) hp[name] = default_hyperparams(kind);
    const auto& setters = hp_setters();

    // Shared hp.* keys apply before method-specific ones regardless of file order.
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& [k, v] : entries) {
            const auto dot = k.find('.');
            const std::string section = dot == std::string::npos ? k : k.substr(0, dot);
            const std::string field = dot == std::string::npos ? "" : k.substr(dot + 1);
            const bool is_hp = section == "hp";
            const bool is_method = hp.count(section) > 0;
            try {
                if (pass == 0 && is_hp) {
                    const auto it = setters.find(field);
                    if (it == setters.end()) throw ConfigError("unknown key '" + k + "'");
                    for (auto& [name, h] : hp) it->second(h, k, v);
                } else if (pass == 1 && is_method) {
                    if (field == "kind") continue;
                    const auto it = setters.find(field);
                    if (it == setters.end()) throw ConfigError("unknown key '" + k + "'");
                    it->second(hp[section], k, v);
                } else if (pass == 0 && !is_hp && !is_method) {
                    auto& d = cfg.data;
                    if (k == "data.classes") d.classes = static_cast<int>(to_int(k, v));
                    else if (k == "data.dim") d.dim = static_cast<int>(to_int(k, v));
                    else if (k == "data.class_sep") d.class_sep = to_double(k, v);
                    else if (k == "data.test_size") d.test_size = to_size(k, v);
                    else if (k == "data.proxy_size") d.proxy_size = to_size(k, v);
                    else if (k == "data.clients") d.clients = static_cast<int>(to_int(k, v));
                    else if (k == "data.alpha") d.alpha = to_double(k, v);
                    else if (k == "data.n_per_client") d.n_per_client = to_size(k, v);
                    else if (k == "data.n_total") d.n_total = to_size(k, v);
                    else if (k == "data.csv") d.csv = v;
                    else if (k == "model.hidden") cfg.hidden = to_size(k, v);
                    else if (k == "model.client_hidden") {
                        cfg.client_hidden.clear();
                        for (const auto& w : split(v, ',')) {
                            if (!w.empty()) cfg.client_hidden.push_back(to_size(k, w));
                        }
                    } else if (k == "run.rounds") cfg.rounds = static_cast<int>(to_int(k, v));
                    else if (k == "run.seeds") {
                        cfg.seeds.clear();
                        for (const auto& s : split(v, ',')) {
                            if (!s.empty()) cfg.seeds.push_back(static_cast<std::uint64_t>(to_size(k, s)));
                        }
                    } else if (k == "run.methods") {
                    } else if (k == "run.target") cfg.target = to_double(k, v);
                    else if (k == "run.out") cfg.out = v;
                    else if (k == "run.parallel_clients") cfg.parallel_clients = to_bool(k, v);
                    else if (k == "metrics.ece_bins") cfg.ece_bins = static_cast<int>(to_int(k, v));
                    else if (k == "adversary.kind") cfg.adversary.kind = adversary::parse_kind(v);
                    else if (k == "adversary.fraction") cfg.adversary.fraction = to_double(k, v);
                    else if (k == "adversary.flip_sends_logits") cfg.adversary.flip_sends_logits = to_bool(k, v);
                    else throw ConfigError("unknown key '" + k + "'");
                }
            } catch (const Error& e) {
                errs.push_back(e.what());
            }
        }
    }
    if (!errs.empty()) throw ValidationError(std::move(errs));

    for (const auto& [name, kind] : declared) cfg.methods.push_back({name, kind, hp[name]});
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "data.classes=" << c.data.classes << '\n'
      << "data.dim=" << c.data.dim << '\n'
      << "data.class_sep=" << fmt_double(c.data.class_sep) << '\n'
      << "data.test_size=" << c.data.test_size << '\n'
      << "data.proxy_size=" << c.data.proxy_size << '\n'
      << "data.clients=" << c.data.clients << '\n'
      << "data.alpha=" << fmt_double(c.data.alpha) << '\n'
      << "data.n_per_client=" << c.data.n_per_client << '\n'
      << "data.n_total=" << c.data.n_total << '\n';
    if (!c.data.csv.empty()) o << "data.csv=" << c.data.csv << '\n';
    o << "model.hidden=" << c.hidden << '\n';
    if (!c.client_hidden.empty()) o << "model.client_hidden=" << join_list(c.client_hidden) << '\n';
    o << "run.rounds=" << c.rounds << '\n'
      << "run.seeds=" << join_list(c.seeds) << '\n'
      << "run.target=" << fmt_double(c.target) << '\n'
      << "run.out=" << c.out << '\n'
      << "run.parallel_clients=" << (c.parallel_clients ? "true" : "false") << '\n'
      << "metrics.ece_bins=" << c.ece_bins << '\n'
      << "adversary.kind=" << adversary::to_string(c.adversary.kind) << '\n'
      << "adversary.fraction=" << fmt_double(c.adversary.fraction) << '\n'
      << "adversary.flip_sends_logits=" << (c.adversary.flip_sends_logits ? "true" : "false") << '\n';
    std::vector<std::string> names;
    for (const auto& m : c.methods) names.push_back(m.name + ":" + protocol::to_string(m.kind));
    o << "run.methods=" << join_list(names) << '\n';
    for (const auto& m : c.methods) {
        for (const auto& [field, value] : hp_fields(m.hp)) o << m.name << '.' << field << '=' << value << '\n';
    }
    return o.str();
}

protocol::Federation build_federation(const ExperimentConfig& config, std::uint64_t seed) {
    const auto& d = config.data;
    LabeledDataset all = d.csv.empty() ? data::gen_synthetic(d.classes, d.dim, d.total(), d.class_sep, seed)
                                       : data::load_csv(d.csv);
    auto [rest, test] = data::split_holdout(all, d.test_size, seed);
    auto [pool, proxy] = data::proxy_split(rest, d.proxy_size, seed);

    protocol::Federation fed;
    fed.classes = all.classes;
    fed.clients = data::dirichlet_partition(pool, d.clients, d.alpha, d.n_per_client, seed);
    fed.proxy = std::move(proxy);
    fed.test = std::move(test);
    fed.server_hidden = config.hidden;
    fed.client_hidden = config.client_hidden;
    fed.adversary = config.adversary;
    fed.adversary.seed = seed;
    fed.seed = seed;
    fed.parallel_clients = config.parallel_clients;
    fed.ece_bins = config.ece_bins;

    Rng roles_rng = substream(seed, "roles");
    const auto roles = adversary::assign_roles(d.clients, fed.adversary, roles_rng);
    for (std::size_t k = 0; k < roles.size(); ++k) fed.clients[k].role = roles[k];
    return fed;
}

std::vector<metrics::RoundReport> simulate(const MethodSpec& method, const protocol::Federation& fed, int rounds) {
    std::vector<metrics::RoundReport> reports;
    reports.reserve(static_cast<std::size_t>(std::max(rounds, 0)));
    protocol::RoundState state = protocol::init_state(fed);
    std::int64_t up = 0;
    std::int64_t down = 0;
    for (int t = 0; t < rounds; ++t) {
        auto [next, report] = protocol::run_round(method.kind, state, method.hp, fed);
        up += report.uplink_bytes_total;
        down += report.downlink_bytes_total;
        report.uplink_bytes_cum = up;
        report.downlink_bytes_cum = down;
        report.energy_joules_cum = metrics::energy(static_cast<double>(up) / metrics::kBytesPerMb,
                                                   static_cast<double>(down) / metrics::kBytesPerMb);
        reports.push_back(std::move(report));
        state = std::move(next);
    }
    return reports;
}

std::string round_csv(const std::string& method, std::uint64_t seed, const std::vector<metrics::RoundReport>& reports) {
    std::ostringstream o;
    o << kRoundCsvHeader << '\n';
    for (const auto& r : reports) {
        o << r.round << ',' << method << ',' << seed << ',' << fmt_double(r.global_test_acc) << ','
          << fmt_double(r.ece) << ',' << fmt_double(r.fair_std) << ',' << fmt_double(r.fair_worst) << ','
          << r.uplink_bytes_total << ',' << r.downlink_bytes_total << ',' << fmt_double(r.energy_joules_cum) << ','
          << r.agg_rule_used << ',' << (r.skipped ? 1 : 0) << '\n';
    }
    return o.str();
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentOutput out;
    const fs::path root(config.out);
    std::error_code ec;
    fs::create_directories(root / "rounds", ec);
    if (ec) throw IoError("cannot create output directory " + root.string() + ": " + ec.message());

    out.config_echo = root / "config.echo";
    write_file(out.config_echo, to_text(config));

    std::ostringstream partitions;
    partitions << "seed,method,partition_hash\n";
    for (std::uint64_t seed : config.seeds) {
        const protocol::Federation fed = build_federation(config, seed);
        const std::uint64_t hash = data::partition_hash(fed.clients);
        for (const auto& m : config.methods) {
            const auto reports = simulate(m, fed, config.rounds);
            const fs::path file = root / "rounds" / (m.name + "_seed" + std::to_string(seed) + ".csv");
            write_file(file, round_csv(m.name, seed, reports));
            out.round_files.push_back(file);
            char hex[32];
            std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
            partitions << seed << ',' << m.name << ',' << hex << '\n';
        }
    }
    out.partition_file = root / "partitions.csv";
    write_file(out.partition_file, partitions.str());

    out.summary_file = root / "summary.csv";
    write_file(out.summary_file, summary_csv(summarize(root / "rounds", config.target)));
    return out;
}

double t_critical_975(int dof) {
    if (dof < 1) throw ParameterError("t_critical_975 needs dof >= 1");
    const boost::math::students_t dist(static_cast<double>(dof));
    return boost::math::quantile(dist, 0.975);
}

MetricStats describe(const std::vector<double>& values) {
    MetricStats s;
    s.n = values.size();
    if (values.empty()) return s;
    const auto n = static_cast<double>(values.size());
    for (double v : values) s.mean += v;
    s.mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_pop = std::sqrt(ss / n);
    if (values.size() >= 2) {
        s.std_sample = std::sqrt(ss / (n - 1.0));
        s.ci95_half = t_critical_975(static_cast<int>(values.size()) - 1) * s.std_sample / std::sqrt(n);
    }
    return s;
}

const MethodSummary& RunSummary::at(const std::string& method) const {
    for (const auto& m : methods) {
        if (m.method == method) return m;
    }
    throw ConfigError("summary has no method '" + method + "'");
}

RunSummary summarize(const fs::path& dir, double target) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv" &&
            entry.path().filename() != "summary.csv" && entry.path().filename() != "partitions.csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    const auto expected = split(kRoundCsvHeader, ',');

    struct SeedRun {
        double final_acc = 0.0;
        std::optional<std::size_t> r_target;
        double uplink_mb = 0.0;
        double uplink_mb_to_target = 0.0;
        double energy = 0.0;
    };
    std::map<std::string, std::vector<SeedRun>> runs;
    for (const auto& file : files) {
        std::vector<std::string> header;
        const auto rows = read_csv_rows(file, header);
        if (header != expected) throw InputError(file.string() + " does not carry the per-round schema");
        if (rows.empty()) continue;
        std::vector<double> acc;
        std::vector<double> uplink;
        for (const auto& row : rows) {
            acc.push_back(to_double("global_acc", row[3]));
            uplink.push_back(to_double("uplink_bytes", row[7]));
        }
        SeedRun run;
        run.final_acc = acc.back();
        run.r_target = metrics::rounds_to_target(acc, target);
        for (double b : uplink) run.uplink_mb += b / metrics::kBytesPerMb;
        if (run.r_target) {
            for (std::size_t t = 0; t <= *run.r_target; ++t) run.uplink_mb_to_target += uplink[t] / metrics::kBytesPerMb;
        }
        run.energy = to_double("energy_j", rows.back()[9]);
        runs[rows.front()[1]].push_back(run);
    }

    RunSummary summary;
    summary.target = target;
    for (const auto& [method, list] : runs) {
        MethodSummary m;
        m.method = method;
        m.seeds = list.size();
        std::vector<double> acc, rt, up, up_t, en;
        for (const auto& r : list) {
            acc.push_back(r.final_acc);
            up.push_back(r.uplink_mb);
            en.push_back(r.energy);
            if (r.r_target) {
                rt.push_back(static_cast<double>(*r.r_target));
                up_t.push_back(r.uplink_mb_to_target);
            }
        }
        m.reached_target = rt.size();
        m.final_acc = describe(acc);
        m.rounds_to_target = describe(rt);
        m.uplink_mb_total = describe(up);
        m.uplink_mb_to_target = describe(up_t);
        m.energy_j = describe(en);
        summary.methods.push_back(std::move(m));
    }
    return summary;
}

std::string summary_csv(const RunSummary& summary) {
    std::ostringstream o;
    o << "method,metric,n,mean,std_pop,std_sample,ci95_half\n";
    auto line = [&](const std::string& method, const char* metric, const MetricStats& s) {
        o << method << ',' << metric << ',' << s.n << ',';
        if (s.n > 0) o << fmt_double(s.mean) << ',' << fmt_double(s.std_pop);
        else o << ',';
        o << ',';
        if (s.ci95_half) o << fmt_double(s.std_sample) << ',' << fmt_double(*s.ci95_half);
        else o << ',';
        o << '\n';
    };
    for (const auto& m : summary.methods) {
        line(m.method, "final_acc", m.final_acc);
        line(m.method, "rounds_to_target", m.rounds_to_target);
        line(m.method, "uplink_mb_total", m.uplink_mb_total);
        line(m.method, "uplink_mb_to_target", m.uplink_mb_to_target);
        line(m.method, "energy_j", m.energy_j);
    }
    return o.str();
}

}  // namespace fedema::runner
