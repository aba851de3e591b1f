// SPDX-License-Identifier: Apache-2.0
#include "mmreg/mmreg.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "mmreg/error.hpp"
#include "mmreg/losses.hpp"
#include "mmreg/metrics.hpp"
#include "mmreg/minnorm.hpp"
#include "mmreg/pipeline.hpp"

struct mmreg_config {
    mmreg::RunConfig cfg;
    std::string source; // verbatim input text; empty for defaults
};

namespace {

thread_local std::string g_last_error;

mmreg_status to_status(mmreg::ErrorKind k) {
    switch (k) {
    case mmreg::ErrorKind::Validation: return MMREG_ERR_VALIDATION;
    case mmreg::ErrorKind::Numeric: return MMREG_ERR_NUMERIC;
    case mmreg::ErrorKind::Io: return MMREG_ERR_IO;
    case mmreg::ErrorKind::CheckFailed: return MMREG_ERR_CHECK_FAILED;
    }
    return MMREG_ERR_INTERNAL;
}

template <class F>
mmreg_status guarded(F&& f) {
    g_last_error.clear();
    try {
        return f();
    } catch (const mmreg::Error& e) {
        g_last_error = e.what();
        return to_status(e.kind());
    } catch (const nlohmann::json::exception& e) {
        g_last_error = std::string("malformed JSON: ") + e.what();
        return MMREG_ERR_VALIDATION;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return MMREG_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MMREG_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

mmreg_status null_arg(const char* what) {
    g_last_error = std::string("null argument: ") + what;
    return MMREG_ERR_VALIDATION;
}

template <class F>
mmreg_status run_command(const mmreg_config* cfg, char** report, F&& cmd) {
    if (cfg == nullptr) return null_arg("cfg");
    if (report == nullptr) return null_arg("report_json");
    *report = nullptr;
    return guarded([&] {
        mmreg::write_config_files(cfg->cfg, cfg->source);
        mmreg_status st = MMREG_OK;
        const nlohmann::json j = cmd(cfg->cfg, st);
        *report = dup_string(j.dump(2));
        return st;
    });
}

} // namespace

extern "C" {

const char* mmreg_version(void) { return "0.1.0"; }

const char* mmreg_last_error(void) { return g_last_error.c_str(); }

void mmreg_free_string(char* s) { std::free(s); }

mmreg_status mmreg_config_default(mmreg_config** out) {
    if (out == nullptr) return null_arg("out");
    return guarded([&] {
        *out = new mmreg_config{};
        return MMREG_OK;
    });
}

mmreg_status mmreg_config_parse(const char* text, mmreg_config** out) {
    if (text == nullptr) return null_arg("text");
    if (out == nullptr) return null_arg("out");
    *out = nullptr;
    return guarded([&] {
        auto cfg = mmreg::parse_config(text);
        *out = new mmreg_config{std::move(cfg), text};
        return MMREG_OK;
    });
}

mmreg_status mmreg_config_load(const char* path, mmreg_config** out) {
    if (path == nullptr) return null_arg("path");
    if (out == nullptr) return null_arg("out");
    *out = nullptr;
    return guarded([&] {
        std::ifstream f(path, std::ios::binary);
        if (!f) mmreg::fail_io(std::string("cannot open config '") + path + "'");
        std::ostringstream ss;
        ss << f.rdbuf();
        auto cfg = mmreg::parse_config(ss.str());
        *out = new mmreg_config{std::move(cfg), ss.str()};
        return MMREG_OK;
    });
}

mmreg_status mmreg_config_set(mmreg_config* cfg, const char* key, const char* value) {
    if (cfg == nullptr) return null_arg("cfg");
    if (key == nullptr || value == nullptr) return null_arg("key/value");
    return guarded([&] {
        mmreg::RunConfig next = cfg->cfg;
        mmreg::set_config_value(next, key, value);
        next.validate();
        cfg->cfg = std::move(next);
        return MMREG_OK;
    });
}

mmreg_status mmreg_config_render(const mmreg_config* cfg, char** out) {
    if (cfg == nullptr) return null_arg("cfg");
    if (out == nullptr) return null_arg("out");
    return guarded([&] {
        *out = dup_string(mmreg::render_config(cfg->cfg));
        return MMREG_OK;
    });
}

void mmreg_config_free(mmreg_config* cfg) { delete cfg; }

mmreg_status mmreg_gen_data(const mmreg_config* cfg, char** report_json) {
    return run_command(cfg, report_json, [](const mmreg::RunConfig& c, mmreg_status&) { return mmreg::cmd_gen_data(c); });
}

mmreg_status mmreg_pretrain(const mmreg_config* cfg, char** report_json) {
    return run_command(cfg, report_json, [](const mmreg::RunConfig& c, mmreg_status&) { return mmreg::cmd_pretrain(c); });
}

mmreg_status mmreg_train_joint(const mmreg_config* cfg, int baseline, char** report_json) {
    return run_command(cfg, report_json, [baseline](const mmreg::RunConfig& c, mmreg_status&) {
        return mmreg::cmd_train_joint(c, baseline != 0);
    });
}

mmreg_status mmreg_eval(const mmreg_config* cfg, char** report_json) {
    return run_command(cfg, report_json, [](const mmreg::RunConfig& c, mmreg_status&) { return mmreg::cmd_eval(c); });
}

mmreg_status mmreg_theory(const mmreg_config* cfg, char** report_json) {
    return run_command(cfg, report_json, [](const mmreg::RunConfig& c, mmreg_status& st) {
        bool passed = false;
        auto j = mmreg::cmd_theory(c, &passed);
        if (!passed) {
            st = MMREG_ERR_CHECK_FAILED;
            g_last_error = "theory checks failed: " + j["failing"].dump();
        }
        return j;
    });
}

mmreg_status mmreg_probe(const mmreg_config* cfg, char** report_json) {
    return run_command(cfg, report_json, [](const mmreg::RunConfig& c, mmreg_status&) { return mmreg::cmd_probe(c); });
}

mmreg_status mmreg_metrics(const double* y, const double* yhat, size_t n, double out_metrics[5]) {
    if (y == nullptr || yhat == nullptr || out_metrics == nullptr) return null_arg("y/yhat/out_metrics");
    return guarded([&] {
        const auto m = mmreg::compute_metrics({y, n}, {yhat, n});
        out_metrics[0] = m.r2;
        out_metrics[1] = m.mse;
        out_metrics[2] = m.mae;
        out_metrics[3] = m.gm;
        out_metrics[4] = m.smape;
        return MMREG_OK;
    });
}

mmreg_status mmreg_minnorm_two(const double* g1, const double* g2, size_t n, double* alpha_mm, double* alpha_uni) {
    if (g1 == nullptr || g2 == nullptr || alpha_mm == nullptr || alpha_uni == nullptr)
        return null_arg("g1/g2/alpha");
    return guarded([&] {
        const auto w = mmreg::minnorm_two({g1, n}, {g2, n});
        *alpha_mm = w.alpha_mm;
        *alpha_uni = w.alpha_uni;
        return MMREG_OK;
    });
}

mmreg_status mmreg_margin_at(size_t t, double m0, double beta, size_t t_n, double* out) {
    if (out == nullptr) return null_arg("out");
    return guarded([&] {
        mmreg::MarginSchedule s{m0, beta, t_n};
        s.validate();
        *out = mmreg::margin_at(t, s);
        return MMREG_OK;
    });
}

} // extern "C"
