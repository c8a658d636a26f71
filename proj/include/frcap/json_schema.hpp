#pragma once

// Validator for the subset of JSON Schema (draft 7) used by the published
// config schema: type, enum, const, properties, required,
// additionalProperties, items, minItems, maxItems, minimum, maximum,
// exclusiveMinimum, exclusiveMaximum, minLength, anyOf, oneOf. Any other
// keyword is rejected so the schema cannot silently outgrow the validator.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace frcap {

// One message per violation, each prefixed with the JSON pointer of the
// offending value. Empty when the document is valid.
std::vector<std::string> validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema);

}  // namespace frcap
