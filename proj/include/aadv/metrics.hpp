#pragma once

#include "aadv/tensor.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace aadv {

struct Norms {
    double l0 = 0, l1 = 0, l2 = 0, linf = 0;
};

/// l0 counts entries with |v| > 1e-12; finalized perturbations contain exact
/// zeros by construction, so the threshold is safety only.
Norms norms(const Tensor& v);

/// 100 * l0 / n, rounded to 2 decimals.
double pixel_fraction(double l0, std::size_t n);

struct ImageRecord {
    int id = 0;
    int target = 0;
    bool success = false;
    double l0 = 0, l1 = 0, l2 = 0, linf = 0, pixfrac = 0;
    int iters = 0;
    double seconds = 0;
};

struct Aggregates {
    std::size_t attempted = 0, successes = 0;
    std::optional<double> asr; // percent; null when nothing was attempted
    double mean_l0 = 0, mean_l1 = 0, mean_l2 = 0, mean_linf = 0, mean_pixfrac = 0,
           mean_seconds = 0;
    // means over successful attacks only (all-attempt means are primary)
    double succ_mean_l0 = 0, succ_mean_l2 = 0;
};

struct RunReport {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<ImageRecord> images;
    Aggregates agg;

    /// Recompute aggregates from the per-image rows.
    void finalize();
};

Aggregates compute_aggregates(const std::vector<ImageRecord>& images);

std::string report_to_text(const RunReport& report);
RunReport report_from_text(const std::string& text);
void emit_report(const RunReport& report, const std::string& path);
RunReport load_report(const std::string& path);

/// Replace every timing field's value with "-" for determinism diffs.
std::string mask_timing_fields(const std::string& report_text);

/// Write original, adversarial, contrast-stretched |difference| and mask as
/// binary P5/P6 files named <prefix>_{orig,adv,diff,mask}.{pgm,ppm}.
void dump_images(const Tensor& x, const Tensor& x_adv, const Tensor& mask,
                 const std::string& prefix);

/// Read a binary P5/P6 file back as [h x w x c] with values v/255.
Tensor read_pnm(const std::string& path);

} // namespace aadv
