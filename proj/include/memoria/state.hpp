#pragma once

#include <memory>

#include "memoria/embedding.hpp"
#include "memoria/memory_store.hpp"
#include "memoria/pem.hpp"
#include "memoria/retrieval.hpp"

namespace memoria {

// Everything the engine knows about one user.
struct UserState {
  explicit UserState(std::shared_ptr<const EmbeddingProvider> embedder,
                     MemoryStore initial = MemoryStore())
      : store(std::move(initial)), index(std::move(embedder)) {
    rebuild_index();
  }

  MemoryStore store;
  PersonalityProfile profile;
  MemoryIndex index;

  void rebuild_index() {
    MemoryIndex fresh(index.embedder_ptr());
    const auto records = index_records(store);
    fresh.upsert(records);
    index = std::move(fresh);
  }

  friend bool operator==(const UserState& a, const UserState& b) {
    return a.store == b.store && a.profile == b.profile && a.index.records() == b.index.records();
  }
};

}  // namespace memoria
