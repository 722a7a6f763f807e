#pragma once

#include <pgvton/image.hpp>

namespace pgvton {

/// Channel layout of the 7-category parsing map.
inline constexpr int kParsingChannels = 7;

enum ParsingChannel : int {
  kBackground = 0,
  kHair = 1,
  kFace = 2,
  kUpperSkin = 3,
  kUpperGarment = 4,
  kLeg = 5,
  kLowerGarment = 6,
};

/// Channels kept by the remainder projection (hair, face, leg, lower garment).
inline constexpr bool kRemainderChannel[kParsingChannels] = {
    false, true, true, false, false, true, true};

}  // namespace pgvton
