#include "frcap/json_schema.hpp"

#include <algorithm>
#include <cmath>

#include "frcap/error.hpp"

namespace frcap {

namespace {

using nlohmann::json;

const std::vector<std::string> kKnownKeywords{
    "$schema", "$id",      "title",    "description", "default",  "type",
    "enum",    "const",    "properties", "required",  "additionalProperties",
    "items",   "minItems", "maxItems", "minimum",     "maximum",  "exclusiveMinimum",
    "exclusiveMaximum",    "minLength", "anyOf",      "oneOf",    "examples"};

bool has_type(const json& v, const std::string& type) {
  if (type == "null") return v.is_null();
  if (type == "boolean") return v.is_boolean();
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::isfinite(v.get<double>()) && std::floor(v.get<double>()) == v.get<double>();
  }
  throw InvalidParameter("schema uses unknown type '" + type + "'");
}

std::string pointer(const std::string& base, const std::string& token) {
  std::string t;
  for (char c : token) {
    if (c == '~') t += "~0";
    else if (c == '/') t += "~1";
    else t += c;
  }
  return base + "/" + t;
}

void check(const json& v, const json& s, const std::string& at, std::vector<std::string>& errors) {
  if (s.is_boolean()) {
    if (!s.get<bool>()) errors.push_back(at + ": no value is allowed here");
    return;
  }
  if (!s.is_object()) throw InvalidParameter("schema node at " + at + " is not an object");
  for (const auto& [k, _] : s.items()) {
    if (std::find(kKnownKeywords.begin(), kKnownKeywords.end(), k) == kKnownKeywords.end()) {
      throw InvalidParameter("schema keyword '" + k + "' is not supported");
    }
  }
  const std::string where = at.empty() ? "/" : at;

  if (s.contains("type")) {
    const json& t = s["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = has_type(v, t.get<std::string>());
    } else {
      for (const auto& one : t) ok = ok || has_type(v, one.get<std::string>());
    }
    if (!ok) {
      errors.push_back(where + ": expected type " + t.dump() + ", got " + v.type_name());
      return;
    }
  }
  if (s.contains("enum")) {
    const auto& e = s["enum"];
    if (std::find(e.begin(), e.end(), v) == e.end()) errors.push_back(where + ": value " + v.dump() + " not in " + e.dump());
  }
  if (s.contains("const") && v != s["const"]) errors.push_back(where + ": expected " + s["const"].dump());

  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) errors.push_back(where + ": below minimum " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>()) errors.push_back(where + ": above maximum " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) {
      errors.push_back(where + ": must exceed " + s["exclusiveMinimum"].dump());
    }
    if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>()) {
      errors.push_back(where + ": must be below " + s["exclusiveMaximum"].dump());
    }
  }
  if (v.is_string() && s.contains("minLength") && v.get<std::string>().size() < s["minLength"].get<std::size_t>()) {
    errors.push_back(where + ": string shorter than " + s["minLength"].dump());
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
      errors.push_back(where + ": fewer than " + s["minItems"].dump() + " items");
    }
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) {
      errors.push_back(where + ": more than " + s["maxItems"].dump() + " items");
    }
    if (s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], pointer(at, std::to_string(i)), errors);
    }
  }
  if (v.is_object()) {
    if (s.contains("required")) {
      for (const auto& key : s["required"]) {
        if (!v.contains(key.get<std::string>())) errors.push_back(where + ": missing required key '" + key.get<std::string>() + "'");
      }
    }
    const json empty = json::object();
    const json& props = s.contains("properties") ? s["properties"] : empty;
    for (const auto& [k, child] : v.items()) {
      if (props.contains(k)) {
        check(child, props[k], pointer(at, k), errors);
      } else if (s.contains("additionalProperties")) {
        const json& extra = s["additionalProperties"];
        if (extra.is_boolean() && !extra.get<bool>()) {
          errors.push_back(pointer(at, k) + ": unknown key");
        } else {
          check(child, extra, pointer(at, k), errors);
        }
      }
    }
  }
  if (s.contains("anyOf")) {
    bool any = false;
    for (const auto& alt : s["anyOf"]) {
      std::vector<std::string> sub;
      check(v, alt, at, sub);
      if (sub.empty()) {
        any = true;
        break;
      }
    }
    if (!any) errors.push_back(where + ": matches none of the allowed alternatives");
  }
  if (s.contains("oneOf")) {
    std::size_t matches = 0;
    for (const auto& alt : s["oneOf"]) {
      std::vector<std::string> sub;
      check(v, alt, at, sub);
      if (sub.empty()) ++matches;
    }
    if (matches != 1) errors.push_back(where + ": must match exactly one alternative, matches " + std::to_string(matches));
  }
}

}  // namespace

std::vector<std::string> validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema) {
  std::vector<std::string> errors;
  check(doc, schema, "", errors);
  return errors;
}

}  // namespace frcap
