// Copyright 2026 The ffe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ffe {

enum class ErrorKind {
    InvalidArgument,  // bad sizes, shapes, out-of-range config values
    NonFinite,        // NaN/Inf encountered in data or an intermediate
    Io,               // file open/read/write failures
    Format,           // malformed file contents
    State,            // API misuse (e.g. second backward without reset)
    Diverged,         // optimization blew up
};

const char* to_string(ErrorKind kind) noexcept;

/// Every recoverable failure in the library is reported as an ffe::Error.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorKind::InvalidArgument, what);
}

}  // namespace ffe
