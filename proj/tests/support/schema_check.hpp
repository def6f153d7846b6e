#pragma once

// Just enough JSON Schema to check the shipped schemas: type, enum, required,
// properties, additionalProperties: false, items, min/maxItems,
// minimum/maximum, oneOf and $ref to "#/..." or "<file>#/...".

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "extctl/serialize.hpp"

namespace fx {

class SchemaChecker {
 public:
  explicit SchemaChecker(std::string dir) : dir_(std::move(dir)) {}

  std::vector<std::string> check(const extctl::Json& doc, const std::string& file) {
    errors_.clear();
    walk(doc, load(file), file, "$");
    return errors_;
  }

 private:
  using Json = extctl::Json;

  const Json& load(const std::string& file) {
    auto it = cache_.find(file);
    if (it != cache_.end()) return it->second;
    std::ifstream in(dir_ + "/" + file);
    if (!in) throw std::runtime_error("cannot open schema " + file);
    return cache_.emplace(file, Json::parse(in)).first->second;
  }

  std::pair<const Json*, std::string> resolve(const std::string& ref, const std::string& file) {
    const auto hash = ref.find('#');
    const std::string target = hash == 0 ? file : ref.substr(0, hash);
    const Json& root = load(target);
    const std::string ptr = hash == std::string::npos ? "" : ref.substr(hash + 1);
    return {&root.at(Json::json_pointer(ptr)), target};
  }

  static bool has_type(const Json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    return false;
  }

  void fail(const std::string& at, const std::string& what) { errors_.push_back(at + ": " + what); }

  void walk(const Json& v, const Json& s, const std::string& file, const std::string& at) {
    if (s.contains("$ref")) {
      auto [target, tf] = resolve(s["$ref"].get<std::string>(), file);
      walk(v, *target, tf, at);
      return;
    }
    if (s.contains("oneOf")) {
      int hits = 0;
      for (const auto& alt : s["oneOf"]) {
        SchemaChecker sub(dir_);
        sub.cache_ = cache_;
        sub.walk(v, alt, file, at);
        if (sub.errors_.empty()) ++hits;
      }
      if (hits != 1) fail(at, "matches " + std::to_string(hits) + " oneOf branches");
      return;
    }
    if (s.contains("type") && !has_type(v, s["type"].get<std::string>())) {
      fail(at, "expected " + s["type"].get<std::string>());
      return;
    }
    if (s.contains("enum")) {
      bool ok = false;
      for (const auto& e : s["enum"]) ok = ok || e == v;
      if (!ok) fail(at, "value " + v.dump() + " not in enum");
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) fail(at, "below minimum");
      if (s.contains("maximum") && x > s["maximum"].get<double>()) fail(at, "above maximum");
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& k : s["required"]) {
          if (!v.contains(k.get<std::string>())) fail(at, "missing " + k.get<std::string>());
        }
      }
      const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
      for (const auto& [k, child] : v.items()) {
        if (s.contains("properties") && s["properties"].contains(k)) {
          walk(child, s["properties"][k], file, at + "." + k);
        } else if (closed) {
          fail(at, "unexpected key " + k);
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) fail(at, "too few items");
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) fail(at, "too many items");
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          walk(v[i], s["items"], file, at + "[" + std::to_string(i) + "]");
        }
      }
    }
  }

  std::string dir_;
  std::map<std::string, Json> cache_;
  std::vector<std::string> errors_;
};

}  // namespace fx
