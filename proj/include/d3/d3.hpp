#pragma once

#include <d3/checkpoint.hpp>
#include <d3/complexity.hpp>
#include <d3/error.hpp>
#include <d3/image.hpp>
#include <d3/jpeg_model.hpp>
#include <d3/manifest.hpp>
#include <d3/metrics.hpp>
#include <d3/network.hpp>
#include <d3/patches.hpp>
#include <d3/random.hpp>
#include <d3/report.hpp>
#include <d3/restore.hpp>
#include <d3/sparse_coding.hpp>
#include <d3/train.hpp>
