#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The hailchain authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

// Everything at once. Pulls in the HTTP layer too, which needs httplib.h.

#include "hailchain/chaincode.hpp"
#include "hailchain/codec.hpp"
#include "hailchain/contract.hpp"
#include "hailchain/crypto.hpp"
#include "hailchain/gateway.hpp"
#include "hailchain/geo.hpp"
#include "hailchain/harness.hpp"
#include "hailchain/http_api.hpp"
#include "hailchain/identity.hpp"
#include "hailchain/ledger.hpp"
#include "hailchain/netsim.hpp"
