#pragma once

#include <stdexcept>
#include <string>

namespace chemlm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigInvalid : Error {
  using Error::Error;
};

struct MissingUpstreamArtifact : Error {
  using Error::Error;
};

}  // namespace chemlm
