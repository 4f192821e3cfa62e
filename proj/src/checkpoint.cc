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

#include "isonet/checkpoint.h"

#include <stdexcept>

#include "binary_io.h"

namespace isonet {
namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4b435349;  // "ISCK"
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void SaveCheckpoint(const std::filesystem::path& path, const NetworkSpec& spec,
                    const ParameterVector& params) {
  const HeadKind head = params.layout().head();
  if (params.layout() != ParameterLayout::Build(spec, head)) {
    throw std::invalid_argument("parameters do not match the network spec");
  }
  internal::ByteWriter w;
  w.Put(kCheckpointMagic);
  w.Put(kCheckpointVersion);
  w.Put(static_cast<std::uint32_t>(spec.input_dim));
  w.Put(static_cast<std::uint32_t>(spec.hidden_widths.size()));
  for (int width : spec.hidden_widths) w.Put(static_cast<std::uint32_t>(width));
  w.Put(static_cast<std::uint8_t>(spec.use_instance_norm ? 1 : 0));
  w.Put(static_cast<std::uint32_t>(spec.num_classes));
  w.Put(spec.seed);
  w.Put(static_cast<std::uint8_t>(head == HeadKind::kBinary ? 0 : 1));
  w.Put(static_cast<std::uint32_t>(params.size()));
  w.PutFloats(params.values());
  internal::WriteFile(path, w.bytes());
}

Checkpoint LoadCheckpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = internal::ReadFile(path);
  internal::ByteReader r(bytes);
  try {
    if (r.Get<std::uint32_t>() != kCheckpointMagic) {
      throw std::runtime_error(path.string() + " is not a checkpoint file");
    }
    if (r.Get<std::uint32_t>() != kCheckpointVersion) {
      throw std::runtime_error(path.string() + ": unsupported checkpoint version");
    }
    Checkpoint ck;
    ck.spec.input_dim = static_cast<int>(r.Get<std::uint32_t>());
    const std::uint32_t depth = r.Get<std::uint32_t>();
    if (depth > 1024) throw std::runtime_error(path.string() + ": corrupt spec");
    for (std::uint32_t i = 0; i < depth; ++i) {
      ck.spec.hidden_widths.push_back(static_cast<int>(r.Get<std::uint32_t>()));
    }
    ck.spec.use_instance_norm = r.Get<std::uint8_t>() != 0;
    ck.spec.num_classes = static_cast<int>(r.Get<std::uint32_t>());
    ck.spec.seed = r.Get<std::uint64_t>();
    const HeadKind head =
        r.Get<std::uint8_t>() == 0 ? HeadKind::kBinary : HeadKind::kMulticlass;
    const std::uint32_t count = r.Get<std::uint32_t>();
    ck.params = ParameterVector(ParameterLayout::Build(ck.spec, head), r.GetFloats(count));
    if (r.remaining() != 0) throw std::runtime_error(path.string() + ": trailing bytes");
    return ck;
  } catch (const std::out_of_range&) {
    throw std::runtime_error(path.string() + ": truncated checkpoint");
  }
}

}  // namespace isonet
