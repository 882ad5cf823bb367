#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "branchlim/common.hpp"
#include "branchlim/rayknight.hpp"

namespace branchlim {

// Fixed "%.12g" rendering keeps report files byte-identical across runs.
inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

struct ReportMeta {
    std::uint64_t seed = 0;
    std::string version = kVersion;
    int schema_version = kConfigSchemaVersion;
    unsigned threads = 1;
    double wall_ms = 0.0; // excluded from CSV output; summary text only
};

// One statistical comparison: empirical Laplace value against the continuum
// law, pass iff |empirical - theoretical| <= z_crit * SE + slack.
struct ConvergenceRow {
    std::string kind;  // marginal | joint2 | chain-up | chain-down
    std::uint64_t k = 0;
    double t = 0.0;
    double lambda = 0.0;
    double t2 = 0.0;      // joint2 rows
    double lambda2 = 0.0; // joint2 rows
    double empirical = 0.0;
    double se = 0.0;
    double theoretical = 0.0;
    double z = 0.0;
    double slack = 0.0;
    bool pass = false;
    std::size_t n = 0;
    std::size_t censored = 0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    std::vector<std::string> soft_flags;
    ReportMeta meta;

    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return true;
    }
};

inline void write_convergence_csv(std::ostream& os, const ConvergenceReport& rep) {
    os << "kind,k,t,lambda,t2,lambda2,empirical,se,theoretical,z,slack,pass,n,censored\n";
    for (const auto& r : rep.rows) {
        os << r.kind << ',' << r.k << ',' << fmt_g(r.t) << ',' << fmt_g(r.lambda) << ','
           << fmt_g(r.t2) << ',' << fmt_g(r.lambda2) << ',' << fmt_g(r.empirical) << ','
           << fmt_g(r.se) << ',' << fmt_g(r.theoretical) << ',' << fmt_g(r.z) << ','
           << fmt_g(r.slack) << ',' << (r.pass ? 1 : 0) << ',' << r.n << ',' << r.censored
           << '\n';
    }
}

inline void write_convergence_text(std::ostream& os, const ConvergenceReport& rep,
                                   const std::string& title) {
    os << title << "  [" << rep.meta.version << ", seed " << rep.meta.seed << ", threads "
       << rep.meta.threads << "]\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-10s %6s %6s %7s %12s %10s %12s %8s %6s\n", "kind", "k",
                  "t", "lambda", "empirical", "se", "theory", "z", "pass");
    os << line;
    for (const auto& r : rep.rows) {
        std::snprintf(line, sizeof(line), "%-10s %6llu %6.3g %7.3g %12.6f %10.2e %12.6f %8.2f %6s\n",
                      r.kind.c_str(), static_cast<unsigned long long>(r.k), r.t, r.lambda,
                      r.empirical, r.se, r.theoretical, r.z, r.pass ? "ok" : "FAIL");
        os << line;
    }
    for (const auto& f : rep.soft_flags) os << "  note: " << f << '\n';
    os << (rep.all_pass() ? "ALL PASS" : "FAILURES PRESENT") << "  (wall "
       << fmt_g(rep.meta.wall_ms) << " ms)\n";
}

struct Lemma22Row {
    std::uint64_t k = 0;
    double lambda = 0.0;
    double s_k = 0.0;
    double s_limit = 0.0; // R(lambda) - gamma0 lambda^2 / 2
    double s_gap = 0.0;
    double drift_k = 0.0;     // gamma_k [1 - g_k(e^{-lambda/k})]
    double drift_limit = 0.0; // gamma0 * lambda
    double drift_gap = 0.0;
};

struct Lemma22Table {
    std::vector<Lemma22Row> rows;
    bool monotone_gap_decay = true;
    std::vector<std::string> soft_flags;
    ReportMeta meta;

    bool all_pass() const { return monotone_gap_decay; }
};

inline void write_lemma22_csv(std::ostream& os, const Lemma22Table& table) {
    os << "k,lambda,S_k,S_limit,S_gap,drift_k,drift_limit,drift_gap\n";
    for (const auto& r : table.rows) {
        os << r.k << ',' << fmt_g(r.lambda) << ',' << fmt_g(r.s_k) << ',' << fmt_g(r.s_limit)
           << ',' << fmt_g(r.s_gap) << ',' << fmt_g(r.drift_k) << ',' << fmt_g(r.drift_limit)
           << ',' << fmt_g(r.drift_gap) << '\n';
    }
}

struct GeneratorSummaryRow {
    std::uint64_t k = 0;
    double lambda = 0.0;
    double sup_diff = 0.0;
    double alpha_k = 0.0;
    double beta_k = 0.0;
    double H_k = 0.0;
    double R_k = 0.0;
    double S_k = 0.0;
    double F_k = 0.0;
};

struct GeneratorDetailRow {
    std::uint64_t k = 0;
    double lambda = 0.0;
    double x = 0.0;
    double discrete = 0.0;
    double continuous = 0.0;
};

struct GeneratorTable {
    std::vector<GeneratorSummaryRow> rows;
    std::vector<GeneratorDetailRow> detail;
    bool sup_diff_decreasing = true; // across the k list, per lambda
    ReportMeta meta;

    bool all_pass() const { return sup_diff_decreasing; }
};

inline void write_generator_csv(std::ostream& os, const GeneratorTable& table) {
    os << "k,lambda,R_k,S_k,F_k,sup_diff,alpha_k,beta_k,H_k\n";
    for (const auto& r : table.rows) {
        os << r.k << ',' << fmt_g(r.lambda) << ',' << fmt_g(r.R_k) << ',' << fmt_g(r.S_k) << ','
           << fmt_g(r.F_k) << ',' << fmt_g(r.sup_diff) << ',' << fmt_g(r.alpha_k) << ','
           << fmt_g(r.beta_k) << ',' << fmt_g(r.H_k) << '\n';
    }
}

inline void write_generator_detail_csv(std::ostream& os, const GeneratorTable& table) {
    os << "k,lambda,x,discrete_action,continuous_action\n";
    for (const auto& r : table.detail) {
        os << r.k << ',' << fmt_g(r.lambda) << ',' << fmt_g(r.x) << ',' << fmt_g(r.discrete)
           << ',' << fmt_g(r.continuous) << '\n';
    }
}

struct EmbedRow {
    std::uint64_t k = 0;
    bool feasible = false;
    std::string message; // infeasibility detail when not feasible
    double max_R_error = 0.0;
    double max_F_error = 0.0;
    // identity tolerance for this k: 1e-10 plus the float64 representation
    // floor of the mixture weights amplified by k*gamma_k
    double tol = 1e-10;
};

struct EmbedReport {
    std::vector<EmbedRow> rows;
    ReportMeta meta;

    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.feasible || r.max_R_error > r.tol || r.max_F_error > r.tol) return false;
        return true;
    }
};

inline void write_embed_csv(std::ostream& os, const EmbedReport& rep) {
    os << "k,feasible,max_R_error,max_F_error,tol,message\n";
    for (const auto& r : rep.rows) {
        os << r.k << ',' << (r.feasible ? 1 : 0) << ',' << fmt_g(r.max_R_error) << ','
           << fmt_g(r.max_F_error) << ',' << fmt_g(r.tol) << ',' << '"' << r.message << '"'
           << '\n';
    }
}

struct PsiRow {
    double t = 0.0;
    double lambda = 0.0;
    double psi = 0.0;
    double immigration_integral = 0.0;
    double laplace = 0.0;
};

struct PsiTable {
    std::vector<PsiRow> rows;
    ReportMeta meta;
    bool all_pass() const { return true; }
};

inline void write_psi_csv(std::ostream& os, const PsiTable& table) {
    os << "t,lambda,psi,immigration_integral,laplace\n";
    for (const auto& r : table.rows) {
        os << fmt_g(r.t) << ',' << fmt_g(r.lambda) << ',' << fmt_g(r.psi) << ','
           << fmt_g(r.immigration_integral) << ',' << fmt_g(r.laplace) << '\n';
    }
}

inline void write_sde_csv(std::ostream& os, const SdeReport& rep) {
    os << "field,t,lambda,empirical,se,theoretical,n,censored\n";
    const auto dump = [&](const char* name, const std::vector<SdeMarginal>& ms) {
        for (const auto& m : ms) {
            os << name << "_mean," << fmt_g(m.t) << ",," << fmt_g(m.mean_stat.mean) << ','
               << fmt_g(m.mean_stat.se()) << ',' << fmt_g(m.theoretical_mean) << ','
               << m.mean_stat.n << ',' << rep.n_censored << '\n';
            for (std::size_t i = 0; i < m.lambdas.size(); ++i) {
                os << name << "_laplace," << fmt_g(m.t) << ',' << fmt_g(m.lambdas[i]) << ','
                   << fmt_g(m.laplace_stats[i].mean) << ',' << fmt_g(m.laplace_stats[i].se())
                   << ',' << fmt_g(m.laplace_theory[i]) << ',' << m.laplace_stats[i].n << ','
                   << rep.n_censored << '\n';
            }
        }
    };
    dump("xi", rep.xi);
    dump("eta", rep.eta);
    for (const auto& b : rep.boxes) {
        os << "occupation_box," << fmt_g(b.lo) << ',' << fmt_g(b.hi) << ','
           << fmt_g(b.mean_rel_error) << ',' << fmt_g(b.max_rel_error) << ','
           << fmt_g(b.fraction_within_5pct) << ',' << rep.n_paths << ',' << rep.n_censored
           << '\n';
    }
}

struct DbiPathSummary {
    std::size_t n_paths = 0;
    std::size_t n_capped = 0;
    double final_mean = 0.0;
    double final_se = 0.0;
    double predicted_mean = 0.0;
};

inline void write_path_csv(std::ostream& os, const DbiPath& path) {
    os << "step,state\n";
    for (std::size_t i = 0; i < path.states.size(); ++i)
        os << i << ',' << path.states[i] << '\n';
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + dir);
}

} // namespace branchlim
