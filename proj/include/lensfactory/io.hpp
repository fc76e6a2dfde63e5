#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "lensfactory/design.hpp"
#include "lensfactory/search.hpp"
#include "lensfactory/tolerance.hpp"

namespace lf {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Pretty-printed with a trailing newline. Doubles round-trip exactly.
std::string dump(const Json& j);
Json read_json_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

// Specs and configs. Readers accept partial objects and keep defaults for missing keys;
// they throw ValidationError on wrong types or unknown enum names.
Json to_json(const SensorFormat& s);
SensorFormat sensor_from_json(const Json& j);
Json to_json(const DesignSpec& s);
DesignSpec spec_from_json(const Json& j);
Json to_json(const EvolutionConfig& c);
EvolutionConfig evolution_from_json(const Json& j);
Json to_json(const MeritConfig& c);
MeritConfig merit_from_json(const Json& j);
Json to_json(const ToleranceConfig& c);
ToleranceConfig tolerance_config_from_json(const Json& j);

Json to_json(const LensElement& e);
/// Elements are referenced by stock id. Throws NotFound for an id missing from the catalog.
Json to_json(const LensSystem& s);
LensSystem system_from_json(const Json& j, const Catalog& catalog);

Json to_json(const MeritReport& r);
MeritReport report_from_json(const Json& j);
Json to_json(const Candidate& c);
Candidate candidate_from_json(const Json& j, const Catalog& catalog);
Json to_json(const CandidatePool& p);
CandidatePool pool_from_json(const Json& j, const Catalog& catalog);
Json to_json(const EvolutionStats& s);

Json to_json(const Distribution& d);
Json to_json(const ToleranceReport& r);

Json to_json(const PsfGrid& g);
Json to_json(const MtfCurve& c);
Json to_json(const CalibrationTable& t);
Json to_json(const SketchResult& r);
Json to_json(const TraceRecord& r);

/// PSF as text: a header comment line, then one row of values per sensor row.
std::string psf_text(const PsfGrid& g);

}  // namespace lf
