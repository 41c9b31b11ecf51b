#!/usr/bin/env python3
"""
Test suite for the utils module.

Test categories:
1. YAML configuration loading and caching
2. config.yaml sections
3. Flat experiment files
4. Config hashing
"""

import os
import sys
from unittest.mock import mock_open, patch

import pytest
import yaml

# Add project root to path for imports
project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
if project_root not in sys.path:
    sys.path.insert(0, project_root)


class TestUtilsModule:
    """utils module testing"""

    @pytest.mark.unit
    def test_utils_module_imports(self):
        """Test 1: Utils module imports successfully"""
        from backend.code import utils

        assert hasattr(utils, "load_yaml_config")
        assert hasattr(utils, "config_section")
        assert hasattr(utils, "load_flat_config")
        assert hasattr(utils, "config_hash")

    @pytest.mark.unit
    def test_load_yaml_config_success(self, tmp_path):
        """Test 2: YAML files load into a dict and are cached by path"""
        from backend.code.utils import load_yaml_config

        path = tmp_path / "settings.yaml"
        path.write_text("solver:\n  inner_iters: 7\n")
        assert load_yaml_config(path) == {"solver": {"inner_iters": 7}}
        path.write_text("solver:\n  inner_iters: 9\n")
        assert load_yaml_config(path)["solver"]["inner_iters"] == 7

    @pytest.mark.unit
    def test_load_yaml_config_file_not_found(self, tmp_path):
        """Test 3: Missing YAML file"""
        from backend.code.utils import load_yaml_config

        with pytest.raises(FileNotFoundError):
            load_yaml_config(tmp_path / "missing.yaml")

    @pytest.mark.unit
    def test_load_yaml_config_yaml_error(self, tmp_path):
        """Test 4: Malformed YAML"""
        from backend.code.utils import load_yaml_config

        path = tmp_path / "broken.yaml"
        path.write_text("solver: [unclosed\n")
        with pytest.raises(yaml.YAMLError):
            load_yaml_config(path)

    @pytest.mark.unit
    def test_config_section_is_a_copy(self):
        """Test 5: Sections of config.yaml can be modified without touching the cache"""
        from backend.code.utils import config_section

        solver = config_section("solver")
        assert solver["inner_iters"] == 25
        solver["inner_iters"] = 1
        assert config_section("solver")["inner_iters"] == 25
        assert config_section("no_such_section") == {}

    @pytest.mark.unit
    @patch("builtins.open", new_callable=mock_open, read_data="nx: 4\nfailures: list:1@2\n")
    def test_load_flat_config_basic(self, mock_file):
        """Test 6: Flat experiment files"""
        from backend.code.utils import load_flat_config

        assert load_flat_config("exp.yaml") == {"nx": 4, "failures": "list:1@2"}
        mock_file.assert_called_once_with("exp.yaml", "r", encoding="utf-8")

    @pytest.mark.unit
    @pytest.mark.parametrize("content", ["- 1\n- 2\n", "nx: [4, 4]\n", "solver:\n  tol: 1\n"])
    def test_load_flat_config_rejects_nesting(self, content):
        """Test 7: Experiment files must be flat mappings"""
        from backend.code.utils import load_flat_config

        with patch("builtins.open", mock_open(read_data=content)):
            with pytest.raises(ValueError):
                load_flat_config("exp.yaml")

    @pytest.mark.unit
    def test_config_hash(self):
        """Test 8: Hash is short, stable and key-order independent"""
        from backend.code.utils import config_hash

        first = config_hash({"nx": 8, "ranks": 4, "matrix": None})
        assert first == config_hash({"matrix": None, "ranks": 4, "nx": 8})
        assert len(first) == 12
        assert first != config_hash({"nx": 8, "ranks": 2, "matrix": None})
