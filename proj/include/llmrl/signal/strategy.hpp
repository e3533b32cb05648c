#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrl/core/common.hpp"

namespace llmrl {

enum class Direction { short_ = 0, long_ = 1 };

inline const char* to_string(Direction d) { return d == Direction::long_ ? "LONG" : "SHORT"; }

enum class FeatureDirection { long_, short_, neutral };

inline const char* to_string(FeatureDirection d) {
    switch (d) {
        case FeatureDirection::long_: return "LONG";
        case FeatureDirection::short_: return "SHORT";
        case FeatureDirection::neutral: return "NEUTRAL";
    }
    return "NEUTRAL";
}

struct FeatureVote {
    std::string feature;
    FeatureDirection direction = FeatureDirection::neutral;
    int weight = 1;  // Likert 1..3
};

/// One monthly strategy from the strategist prompt.
struct Strategy {
    Date date{};
    Direction direction = Direction::long_;
    int confidence_likert = 1;
    std::string explanation;
    std::vector<FeatureVote> features_used;
};

inline constexpr std::size_t kMaxExplanationWords = 350;

inline std::size_t word_count(const std::string& text) {
    std::istringstream in(text);
    std::size_t n = 0;
    std::string w;
    while (in >> w) ++n;
    return n;
}

namespace detail {

/// Extracts the outermost {...} object, tolerating code fences or prose around it.
inline std::string json_object_slice(const std::string& payload) {
    auto b = payload.find('{');
    auto e = payload.rfind('}');
    if (b == std::string::npos || e == std::string::npos || e < b) return payload;
    return payload.substr(b, e - b + 1);
}

inline int likert_field(const nlohmann::json& j, const char* name, const char* module) {
    if (!j.contains(name)) throw ValidationError(module, std::string("missing required field '") + name + "'");
    const auto& v = j.at(name);
    if (!v.is_number_integer() && !(v.is_number_float() && v.get<double>() == static_cast<int>(v.get<double>()))) {
        throw ValidationError(module, std::string("field '") + name + "' must be an integer");
    }
    int x = static_cast<int>(v.get<double>());
    if (x < 1 || x > 3) {
        throw ValidationError(module, std::string("field '") + name + "' = " + std::to_string(x) + " outside {1,2,3}");
    }
    return x;
}

}  // namespace detail

/// Parses and validates the strategist's output object:
/// {action, action_confidence, explanation, features_used: [{feature, direction, weight}]}.
inline Strategy parse_strategy(const std::string& payload, Date date = {}) {
    constexpr const char* kModule = "signal_math";
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::json_object_slice(payload));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(kModule, std::string("strategy payload is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError(kModule, "strategy payload must be a JSON object");
    for (const char* f : {"action", "action_confidence", "explanation", "features_used"}) {
        if (!j.contains(f)) throw ValidationError(kModule, std::string("missing required field '") + f + "'");
    }
    Strategy s;
    s.date = date;
    if (!j["action"].is_string()) throw ValidationError(kModule, "field 'action' must be a string");
    const auto action = j["action"].get<std::string>();
    if (action == "LONG") s.direction = Direction::long_;
    else if (action == "SHORT") s.direction = Direction::short_;
    else throw ValidationError(kModule, "action '" + action + "' is not LONG or SHORT");

    s.confidence_likert = detail::likert_field(j, "action_confidence", kModule);

    if (!j["explanation"].is_string()) throw ValidationError(kModule, "field 'explanation' must be a string");
    s.explanation = j["explanation"].get<std::string>();
    if (word_count(s.explanation) > kMaxExplanationWords) {
        throw ValidationError(kModule, "explanation exceeds 350 words");
    }

    if (!j["features_used"].is_array()) throw ValidationError(kModule, "field 'features_used' must be a list");
    for (const auto& fj : j["features_used"]) {
        if (!fj.is_object() || !fj.contains("feature") || !fj["feature"].is_string()) {
            throw ValidationError(kModule, "features_used entries need a 'feature' string");
        }
        FeatureVote v;
        v.feature = fj["feature"].get<std::string>();
        const auto dir = fj.value("direction", std::string("NEUTRAL"));
        if (dir == "LONG") v.direction = FeatureDirection::long_;
        else if (dir == "SHORT") v.direction = FeatureDirection::short_;
        else if (dir == "NEUTRAL") v.direction = FeatureDirection::neutral;
        else throw ValidationError(kModule, "feature direction '" + dir + "' is not LONG, SHORT or NEUTRAL");
        v.weight = detail::likert_field(fj, "weight", kModule);
        s.features_used.push_back(std::move(v));
    }
    return s;
}

inline nlohmann::json to_json(const Strategy& s) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : s.features_used) {
        features.push_back({{"feature", f.feature}, {"direction", to_string(f.direction)}, {"weight", f.weight}});
    }
    return {{"action", to_string(s.direction)},
            {"action_confidence", s.confidence_likert},
            {"explanation", s.explanation},
            {"features_used", features}};
}

}  // namespace llmrl
