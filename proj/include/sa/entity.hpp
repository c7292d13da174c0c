// Shared geo-registered entity database with last-writer-wins versioning.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sa/geo.hpp"

namespace sa {

using EntityId = std::string;
using FederateId = std::string;

class UnknownClassError : public std::runtime_error {
 public:
  explicit UnknownClassError(const std::string& cls)
      : std::runtime_error("unknown entity class '" + cls + "'"), class_name_(cls) {}
  const std::string& class_name() const { return class_name_; }

 private:
  std::string class_name_;
};

struct EntityClass {
  std::string name;
  bool vital = false;
  double base_impact_radius = 0.0;
  bool amplifier = false;
  std::string symbol_code;

  void validate() const {
    if (name.empty()) throw std::invalid_argument("entity class name is empty");
    if (!(base_impact_radius >= 0.0) || !std::isfinite(base_impact_radius)) {
      throw std::invalid_argument("class '" + name + "': impact radius must be >= 0");
    }
    if (symbol_code.empty()) {
      throw std::invalid_argument("class '" + name + "': symbol code is empty");
    }
  }

  friend bool operator==(const EntityClass&, const EntityClass&) = default;
};

struct Entity {
  EntityId id;
  std::string class_name;
  Point3 position;
  double heading = 0.0;  // degrees, [0, 360)
  double last_update = 0.0;  // scenario clock seconds
  std::uint64_t version = 1;
  FederateId owner;

  void validate() const {
    if (id.empty()) throw std::invalid_argument("entity id is empty");
    if (!is_finite(position)) throw std::invalid_argument("entity '" + id + "': bad position");
    if (!(heading >= 0.0 && heading < 360.0)) {
      throw std::invalid_argument("entity '" + id + "': heading must be in [0, 360)");
    }
    if (!std::isfinite(last_update)) {
      throw std::invalid_argument("entity '" + id + "': last_update not finite");
    }
  }

  friend bool operator==(const Entity&, const Entity&) = default;
};

/// (version, owner) pair ordering concurrent writes.
struct Stamp {
  std::uint64_t version = 0;
  FederateId owner;

  friend auto operator<=>(const Stamp&, const Stamp&) = default;
};

enum class MutationResult { applied, ignored };

inline const char* to_string(MutationResult r) {
  return r == MutationResult::applied ? "applied" : "ignored";
}

/// Single-writer store. Removals leave a tombstone so that a late, older
/// update cannot resurrect a removed entity.
class EntityDatabase {
 public:
  void add_class(EntityClass cls) {
    cls.validate();
    if (classes_.contains(cls.name)) {
      throw std::invalid_argument("duplicate entity class '" + cls.name + "'");
    }
    classes_.emplace(cls.name, std::move(cls));
    ++revision_;
  }

  const EntityClass* find_class(const std::string& name) const {
    auto it = classes_.find(name);
    return it == classes_.end() ? nullptr : &it->second;
  }

  const EntityClass& class_of(const Entity& e) const {
    const auto* cls = find_class(e.class_name);
    if (!cls) throw UnknownClassError(e.class_name);
    return *cls;
  }

  MutationResult upsert(const Entity& e) {
    if (!find_class(e.class_name)) throw UnknownClassError(e.class_name);
    e.validate();
    const Stamp incoming{e.version, e.owner};
    if (const auto current = stamp_of(e.id); current && !(incoming > *current)) {
      return MutationResult::ignored;
    }
    tombstones_.erase(e.id);
    entities_[e.id] = e;
    ++revision_;
    return MutationResult::applied;
  }

  /// Removes `id` if (version, owner) beats whatever is stored for it.
  MutationResult remove(const EntityId& id, std::uint64_t version, const FederateId& owner) {
    const Stamp incoming{version, owner};
    if (const auto current = stamp_of(id); current && !(incoming > *current)) {
      return MutationResult::ignored;
    }
    entities_.erase(id);
    tombstones_[id] = incoming;
    ++revision_;
    return MutationResult::applied;
  }

  const Entity* find(const EntityId& id) const {
    auto it = entities_.find(id);
    return it == entities_.end() ? nullptr : &it->second;
  }

  /// All live entities, ascending by id.
  std::vector<Entity> snapshot() const {
    std::vector<Entity> out;
    out.reserve(entities_.size());
    for (const auto& [_, e] : entities_) out.push_back(e);
    return out;
  }

  std::optional<Stamp> stamp_of(const EntityId& id) const {
    if (auto it = entities_.find(id); it != entities_.end()) {
      return Stamp{it->second.version, it->second.owner};
    }
    if (auto it = tombstones_.find(id); it != tombstones_.end()) return it->second;
    return std::nullopt;
  }

  std::size_t size() const { return entities_.size(); }
  std::uint64_t revision() const { return revision_; }
  const std::map<std::string, EntityClass>& classes() const { return classes_; }
  const std::map<EntityId, Entity>& entities() const { return entities_; }
  const std::map<EntityId, Stamp>& tombstones() const { return tombstones_; }

 private:
  std::map<std::string, EntityClass> classes_;
  std::map<EntityId, Entity> entities_;
  std::map<EntityId, Stamp> tombstones_;
  std::uint64_t revision_ = 0;
};

}  // namespace sa
