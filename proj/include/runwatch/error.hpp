/*
 * Copyright 2026 The runwatch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace runwatch {

// Parameter outside its mathematical domain (probability not in [0,1], ...).
class domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or inconsistent input data. Maps to CLI exit code 2.
class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failures. Maps to CLI exit code 1.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Request exceeds a hard size limit of an exhaustive routine.
class capacity_error : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace runwatch
