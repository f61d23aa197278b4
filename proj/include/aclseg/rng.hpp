#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aclseg {

// Stable 64-bit FNV-1a; used for stream derivation and artifact hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Independent generator for one named consumer of a run seed. Streams depend
// only on (seed, name), never on the order in which consumers are created.
std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name);

}  // namespace aclseg
