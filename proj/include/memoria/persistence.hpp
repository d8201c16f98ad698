#pragma once

#include <filesystem>
#include <memory>

#include "memoria/embedding.hpp"
#include "memoria/state.hpp"

namespace memoria {

inline constexpr int kStateFormatVersion = 1;

// Directory layout (one directory per user):
//   core.json, procedural.json, profile.json   canonical documents
//   semantic.log, episodic.log, dialogue.log   one JSON document per line
//   manifest.json                              version, counts, checksums
//
// Every file is written to a temporary sibling and renamed into place, the
// manifest last. Log files are only ever extended: a save refuses to touch a
// log whose committed lines differ from the state being saved. Throws
// save_failed; the previous snapshot stays loadable.
void save_state(const UserState& state, const std::filesystem::path& dir);

// Throws unsupported_version (missing or unknown manifest) or corrupt_state
// naming the offending file. Log lines past the committed count are an
// interrupted save and are ignored.
UserState load_state(const std::filesystem::path& dir,
                     std::shared_ptr<const EmbeddingProvider> embedder);

bool state_exists(const std::filesystem::path& dir);

}  // namespace memoria
