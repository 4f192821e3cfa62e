/*
 * Copyright 2026 The isonet Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ISONET_CHECKPOINT_H_
#define ISONET_CHECKPOINT_H_

#include <filesystem>

#include "isonet/nn.h"

namespace isonet {

// Model file: "ISCK" magic, format version, the NetworkSpec, the head kind,
// then the parameters encoded exactly like a wire-format parameter block
// (u32 count followed by little-endian float32 values).
struct Checkpoint {
  NetworkSpec spec;
  ParameterVector params;
};

void SaveCheckpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                    const ParameterVector& params);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace isonet

#endif  // ISONET_CHECKPOINT_H_
