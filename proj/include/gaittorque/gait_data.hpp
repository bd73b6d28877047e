#pragma once
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "matrix.hpp"

namespace gaittorque {

/// Number of samples a gait cycle is normalized to.
inline constexpr std::size_t kCycleSamples = 200;

enum class Cohort { able, amputee };
enum class SpeedClass { normal, fast };
enum class Provenance { synthetic, ingested };

inline std::string_view to_string(Cohort c) { return c == Cohort::able ? "able" : "amputee"; }
inline std::string_view to_string(SpeedClass s) { return s == SpeedClass::normal ? "normal" : "fast"; }
inline std::string_view to_string(Provenance p) { return p == Provenance::synthetic ? "synthetic" : "ingested"; }

struct SubjectMeta {
    std::string id;
    double mass_kg = 0.0;
    double l_thigh_m = 0.0;
    double l_shank_m = 0.0;
    double l_foot_m = 0.0;
    Cohort cohort = Cohort::able;
    std::optional<double> height_m; // stored, not used by the model

    friend bool operator==(const SubjectMeta&, const SubjectMeta&) = default;
};

/// The four measured channels of one gait cycle. Angles in degrees, torque in N·m.
struct GaitChannels {
    Series theta_hip_deg;
    Series theta_knee_deg;
    Series theta_shank_deg;
    Series tau_ankle_Nm;

    friend bool operator==(const GaitChannels&, const GaitChannels&) = default;
};

/// One gait cycle (heel strike to heel strike) as ingested.
struct TrialRecord {
    std::string id; // file stem of `path`
    std::string subject_id;
    std::string path; // relative to the manifest directory
    double speed_mps = 0.0;
    SpeedClass speed_class = SpeedClass::normal;
    double cycle_duration_s = 1.0;
    bool raw = false;  // raw-rate trials carry a time column and are resampled on processing
    Series time_s;     // raw trials only
    GaitChannels channels;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Canonical feature column order of a processed trial.
inline constexpr std::array<std::string_view, 9> kFeatureNames = {
    "theta_hip", "theta_knee", "theta_shank", "dtheta_hip", "dtheta_knee",
    "dtheta_shank", "l_thigh", "l_shank", "l_foot"};

inline constexpr std::size_t kKinematicFeatures = 6;

inline std::optional<std::size_t> feature_index(std::string_view name) {
    for (std::size_t i = 0; i < kFeatureNames.size(); ++i)
        if (kFeatureNames[i] == name) return i;
    return std::nullopt;
}

/// A trial after signal preparation: 200×9 features and mass-normalized torque.
struct ProcessedTrial {
    std::string id;
    std::string subject_id;
    Cohort cohort = Cohort::able;
    double speed_mps = 0.0;
    SpeedClass speed_class = SpeedClass::normal;
    Matrix features;
    Series target; // N·m/kg
};

struct Dataset {
    std::vector<SubjectMeta> subjects;
    std::vector<TrialRecord> trials;
    Provenance provenance = Provenance::ingested;

    const SubjectMeta* find_subject(std::string_view id) const {
        for (const auto& s : subjects)
            if (s.id == id) return &s;
        return nullptr;
    }

    const SubjectMeta& subject(std::string_view id) const {
        if (const auto* s = find_subject(id)) return *s;
        throw Error(ErrorKind::DanglingSubjectRef, "unknown subject id '" + std::string(id) + "'");
    }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class Rule {
    PositiveMassViolation,
    NonPositiveSegmentLength,
    DuplicateSubjectId,
    DanglingSubjectRef,
    MissingChannel,
    ChannelLengthMismatch,
    TooFewSamples,
    NonFiniteSample,
    NonPositiveSpeed,
    NonPositiveCycleDuration,
    ProcessedLengthNot200,
    TimeColumnMismatch,
};

inline std::string_view to_string(Rule r) {
    switch (r) {
    case Rule::PositiveMassViolation: return "PositiveMassViolation";
    case Rule::NonPositiveSegmentLength: return "NonPositiveSegmentLength";
    case Rule::DuplicateSubjectId: return "DuplicateSubjectId";
    case Rule::DanglingSubjectRef: return "DanglingSubjectRef";
    case Rule::MissingChannel: return "MissingChannel";
    case Rule::ChannelLengthMismatch: return "ChannelLengthMismatch";
    case Rule::TooFewSamples: return "TooFewSamples";
    case Rule::NonFiniteSample: return "NonFiniteSample";
    case Rule::NonPositiveSpeed: return "NonPositiveSpeed";
    case Rule::NonPositiveCycleDuration: return "NonPositiveCycleDuration";
    case Rule::ProcessedLengthNot200: return "ProcessedLengthNot200";
    case Rule::TimeColumnMismatch: return "TimeColumnMismatch";
    }
    return "Unknown";
}

struct Violation {
    Rule rule;
    std::string subject_id;
    std::string trial_id; // empty for subject-level rules
    std::string detail;

    friend bool operator==(const Violation&, const Violation&) = default;
};

namespace detail {
inline bool all_finite(const Series& s) {
    for (double v : s)
        if (!std::isfinite(v)) return false;
    return true;
}
} // namespace detail

/// Checks every dataset invariant. Pure: returns violations in a fixed order
/// (subjects first, then trials in dataset order).
inline std::vector<Violation> validate_dataset(const Dataset& d) {
    std::vector<Violation> out;
    std::set<std::string> seen;
    for (const auto& s : d.subjects) {
        if (!(s.mass_kg > 0.0))
            out.push_back({Rule::PositiveMassViolation, s.id, {}, "mass_kg must be > 0"});
        if (!(s.l_thigh_m > 0.0) || !(s.l_shank_m > 0.0) || !(s.l_foot_m > 0.0))
            out.push_back({Rule::NonPositiveSegmentLength, s.id, {}, "segment lengths must be > 0"});
        if (!seen.insert(s.id).second)
            out.push_back({Rule::DuplicateSubjectId, s.id, {}, "subject id appears more than once"});
    }
    for (const auto& t : d.trials) {
        const auto add = [&](Rule r, std::string detail) {
            out.push_back({r, t.subject_id, t.id, std::move(detail)});
        };
        if (!seen.contains(t.subject_id)) add(Rule::DanglingSubjectRef, "no subject '" + t.subject_id + "'");
        if (!(t.speed_mps > 0.0)) add(Rule::NonPositiveSpeed, "speed_mps must be > 0");
        if (!(t.cycle_duration_s > 0.0)) add(Rule::NonPositiveCycleDuration, "cycle_duration_s must be > 0");

        const auto& c = t.channels;
        const std::array<const Series*, 4> chans = {&c.theta_hip_deg, &c.theta_knee_deg, &c.theta_shank_deg,
                                                    &c.tau_ankle_Nm};
        bool any_empty = false;
        for (const auto* s : chans) any_empty |= s->empty();
        if (any_empty) {
            add(Rule::MissingChannel, "all four channels are required");
            continue;
        }
        const std::size_t n = c.tau_ankle_Nm.size();
        bool equal = true;
        for (const auto* s : chans) equal &= s->size() == n;
        if (!equal) add(Rule::ChannelLengthMismatch, "channel lengths differ");
        bool finite = true;
        for (const auto* s : chans) finite &= detail::all_finite(*s);
        if (!finite) add(Rule::NonFiniteSample, "channel contains a non-finite value");
        if (n < 4) add(Rule::TooFewSamples, "at least 4 samples required");
        if (!t.raw && n != kCycleSamples) add(Rule::ProcessedLengthNot200, "processed trials have exactly 200 samples");
        if (t.raw && t.time_s.size() != n) add(Rule::TimeColumnMismatch, "time column length differs from channels");
        if (t.raw && !detail::all_finite(t.time_s)) add(Rule::NonFiniteSample, "time column contains a non-finite value");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trial CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kProcessedHeader =
    "sample_index,theta_hip_deg,theta_knee_deg,theta_shank_deg,tau_ankle_Nm";
inline constexpr std::string_view kRawHeader =
    "time_s,sample_index,theta_hip_deg,theta_knee_deg,theta_shank_deg,tau_ankle_Nm";

/// Formats with 17 significant digits so values survive a text round trip.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct TrialCsv {
    bool raw = false;
    Series time_s;
    GaitChannels channels;
};

inline TrialCsv read_trial_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open trial CSV " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::SchemaViolation, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    TrialCsv out;
    if (line == kRawHeader) {
        out.raw = true;
    } else if (line != kProcessedHeader) {
        throw Error(ErrorKind::SchemaViolation, path.string() + ": unexpected header '" + line + "'");
    }
    const std::size_t ncols = out.raw ? 6 : 5;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0')
                throw Error(ErrorKind::SchemaViolation,
                            path.string() + ": row " + std::to_string(row) + ": bad number '" + cell + "'");
            if (!std::isfinite(v))
                throw Error(ErrorKind::NonFiniteSample,
                            path.string() + ": row " + std::to_string(row) + ": non-finite value '" + cell + "'");
            vals.push_back(v);
        }
        if (vals.size() != ncols)
            throw Error(ErrorKind::SchemaViolation,
                        path.string() + ": row " + std::to_string(row) + ": expected " + std::to_string(ncols) +
                            " columns");
        std::size_t c = 0;
        if (out.raw) out.time_s.push_back(vals[c++]);
        if (vals[c] != static_cast<double>(row))
            throw Error(ErrorKind::SchemaViolation,
                        path.string() + ": sample_index must count up from 0 (row " + std::to_string(row) + ")");
        ++c;
        out.channels.theta_hip_deg.push_back(vals[c++]);
        out.channels.theta_knee_deg.push_back(vals[c++]);
        out.channels.theta_shank_deg.push_back(vals[c++]);
        out.channels.tau_ankle_Nm.push_back(vals[c++]);
        ++row;
    }
    if (out.raw && row < 4) throw Error(ErrorKind::SchemaViolation, path.string() + ": raw trials need >= 4 rows");
    if (!out.raw && row != kCycleSamples)
        throw Error(ErrorKind::SchemaViolation, path.string() + ": processed trials need exactly 200 rows");
    return out;
}

inline void write_trial_csv(const std::filesystem::path& path, const TrialRecord& t) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
    out << (t.raw ? kRawHeader : kProcessedHeader) << '\n';
    const auto& c = t.channels;
    for (std::size_t i = 0; i < c.tau_ankle_Nm.size(); ++i) {
        if (t.raw) out << format_double(t.time_s[i]) << ',';
        out << i << ',' << format_double(c.theta_hip_deg[i]) << ',' << format_double(c.theta_knee_deg[i]) << ','
            << format_double(c.theta_shank_deg[i]) << ',' << format_double(c.tau_ankle_Nm[i]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace detail {
using nlohmann::json;

template <class T>
T require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        throw Error(ErrorKind::SchemaViolation, where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorKind::SchemaViolation, where + ": field '" + key + "' has the wrong type");
    }
}

inline Cohort parse_cohort(const std::string& s, const std::string& where) {
    if (s == "able") return Cohort::able;
    if (s == "amputee") return Cohort::amputee;
    throw Error(ErrorKind::SchemaViolation, where + ": field 'cohort' must be able|amputee");
}

inline SpeedClass parse_speed_class(const std::string& s, const std::string& where) {
    if (s == "normal") return SpeedClass::normal;
    if (s == "fast") return SpeedClass::fast;
    throw Error(ErrorKind::SchemaViolation, where + ": field 'speed_class' must be normal|fast");
}
} // namespace detail

/// Reads a manifest and every trial CSV it references, then validates.
inline Dataset load_manifest(const std::filesystem::path& manifest_path) {
    using detail::json;
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open manifest " + manifest_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaViolation, manifest_path.string() + ": invalid JSON (" + e.what() + ")");
    }
    const std::string where = manifest_path.string();
    if (detail::require<int>(doc, "format_version", where) != 1)
        throw Error(ErrorKind::SchemaViolation, where + ": field 'format_version' must be 1");

    Dataset d;
    d.provenance = Provenance::ingested;
    if (doc.contains("provenance") && doc["provenance"] == "synthetic") d.provenance = Provenance::synthetic;

    const auto subjects = detail::require<json>(doc, "subjects", where);
    if (!subjects.is_array()) throw Error(ErrorKind::SchemaViolation, where + ": field 'subjects' must be an array");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const auto& js = subjects[i];
        const std::string w = where + ": subjects[" + std::to_string(i) + "]";
        SubjectMeta s;
        s.id = detail::require<std::string>(js, "id", w);
        s.mass_kg = detail::require<double>(js, "mass_kg", w);
        s.l_thigh_m = detail::require<double>(js, "l_thigh_m", w);
        s.l_shank_m = detail::require<double>(js, "l_shank_m", w);
        s.l_foot_m = detail::require<double>(js, "l_foot_m", w);
        s.cohort = detail::parse_cohort(detail::require<std::string>(js, "cohort", w), w);
        if (js.contains("height_m")) s.height_m = detail::require<double>(js, "height_m", w);
        d.subjects.push_back(std::move(s));
    }

    const auto trials = detail::require<json>(doc, "trials", where);
    if (!trials.is_array()) throw Error(ErrorKind::SchemaViolation, where + ": field 'trials' must be an array");
    const auto base = manifest_path.parent_path();
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& jt = trials[i];
        const std::string w = where + ": trials[" + std::to_string(i) + "]";
        TrialRecord t;
        t.subject_id = detail::require<std::string>(jt, "subject_id", w);
        t.path = detail::require<std::string>(jt, "path", w);
        t.id = std::filesystem::path(t.path).stem().string();
        t.speed_mps = detail::require<double>(jt, "speed_mps", w);
        t.speed_class = detail::parse_speed_class(detail::require<std::string>(jt, "speed_class", w), w);
        if (jt.contains("cycle_duration_s")) t.cycle_duration_s = detail::require<double>(jt, "cycle_duration_s", w);
        t.raw = detail::require<bool>(jt, "raw", w);
        if (!d.find_subject(t.subject_id))
            throw Error(ErrorKind::DanglingSubjectRef, w + ": subject_id '" + t.subject_id + "' is not declared");

        auto csv = read_trial_csv(base / t.path);
        if (csv.raw != t.raw)
            throw Error(ErrorKind::SchemaViolation, w + ": 'raw' flag does not match the CSV header of " + t.path);
        t.time_s = std::move(csv.time_s);
        t.channels = std::move(csv.channels);
        d.trials.push_back(std::move(t));
    }

    if (auto v = validate_dataset(d); !v.empty()) {
        const auto& first = v.front();
        const ErrorKind kind = first.rule == Rule::DanglingSubjectRef ? ErrorKind::DanglingSubjectRef
                               : first.rule == Rule::NonFiniteSample  ? ErrorKind::NonFiniteSample
                                                                      : ErrorKind::InvalidDataset;
        throw Error(kind, where + ": " + std::string(to_string(first.rule)) + " (subject '" + first.subject_id +
                              "', trial '" + first.trial_id + "'): " + first.detail);
    }
    return d;
}

/// Writes `manifest.json` plus one CSV per trial under `dir`. Trial CSVs go to
/// each trial's `path` (defaulting to trials/<id>.csv).
inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
    using nlohmann::ordered_json;
    std::filesystem::create_directories(dir);
    ordered_json doc;
    doc["format_version"] = 1;
    doc["provenance"] = std::string(to_string(d.provenance));
    doc["subjects"] = ordered_json::array();
    for (const auto& s : d.subjects) {
        ordered_json js;
        js["id"] = s.id;
        js["mass_kg"] = s.mass_kg;
        js["l_thigh_m"] = s.l_thigh_m;
        js["l_shank_m"] = s.l_shank_m;
        js["l_foot_m"] = s.l_foot_m;
        js["cohort"] = std::string(to_string(s.cohort));
        if (s.height_m) js["height_m"] = *s.height_m;
        doc["subjects"].push_back(std::move(js));
    }
    doc["trials"] = ordered_json::array();
    for (const auto& t : d.trials) {
        const std::string rel = t.path.empty() ? "trials/" + t.id + ".csv" : t.path;
        ordered_json jt;
        jt["subject_id"] = t.subject_id;
        jt["path"] = rel;
        jt["speed_mps"] = t.speed_mps;
        jt["speed_class"] = std::string(to_string(t.speed_class));
        jt["cycle_duration_s"] = t.cycle_duration_s;
        jt["raw"] = t.raw;
        doc["trials"].push_back(std::move(jt));
        const auto p = dir / rel;
        std::filesystem::create_directories(p.parent_path());
        write_trial_csv(p, t);
    }
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write manifest in " + dir.string());
    out << doc.dump(2) << '\n';
}

} // namespace gaittorque
