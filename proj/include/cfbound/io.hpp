#pragma once

#include "cfbound/emcc.hpp"
#include "cfbound/inference.hpp"
#include "cfbound/scm.hpp"
#include "cfbound/selection.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cfbound {

/// Model file contents: the SCM (selector not embedded) and the optional selector.
struct ModelFile {
    Scm model;
    std::optional<Selector> selector;
};

ModelFile model_from_json(const nlohmann::json& j);
/// Writes the model; an embedded selector is written as the "selector" field.
nlohmann::json model_to_json(const Scm& model, const std::optional<Selector>& selector = std::nullopt);

ModelFile read_model(const std::filesystem::path& path);
void write_model(const std::filesystem::path& path, const Scm& model,
                 const std::optional<Selector>& selector = std::nullopt);

/// Records of integer states; header names must match model.observed_names()
/// as a set (columns are reordered to the model order).
std::vector<Config> read_csv(const std::filesystem::path& path, const Scm& model);
std::vector<Config> parse_csv(std::istream& in, const Scm& model, const std::string& source);
void write_csv(const std::filesystem::path& path, const Scm& model, const std::vector<Config>& rows);

CounterfactualQuery query_from_json(const nlohmann::json& j);
nlohmann::json query_to_json(const CounterfactualQuery& q);
/// Query file; "max_worlds" defaults to 2.
struct QueryFile {
    CounterfactualQuery query;
    int max_worlds = 2;
};
QueryFile read_query(const std::filesystem::path& path);

nlohmann::json assignment_to_json(const Scm& model, const ExogenousAssignment& a);
ExogenousAssignment assignment_from_json(const Scm& model, const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
/// Writes through a temporary file renamed into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cfbound
