import logging

import pytest

from src.config import load_settings


@pytest.fixture
def fresh_settings():
    load_settings.cache_clear()
    yield
    load_settings.cache_clear()


def test_settings_are_read_once(fresh_settings, monkeypatch):
    monkeypatch.setenv("HYPERCHOQ_THREADS", "3")
    first = load_settings()
    monkeypatch.setenv("HYPERCHOQ_THREADS", "5")
    assert load_settings() is first
    assert load_settings().threads == 3

    load_settings.cache_clear()
    assert load_settings().threads == 5


def test_environment_values_are_parsed(fresh_settings, monkeypatch):
    monkeypatch.setenv("HYPERCHOQ_THREADS", "2")
    monkeypatch.setenv("HYPERCHOQ_CACHE_SIZE", "4")
    monkeypatch.setenv("HYPERCHOQ_LOG_LEVEL", "debug")
    settings = load_settings()
    assert (settings.threads, settings.cache_size, settings.log_level) == (2, 4, "DEBUG")


@pytest.mark.parametrize(
    "name, value",
    [("HYPERCHOQ_THREADS", "many"), ("HYPERCHOQ_CACHE_SIZE", "0"), ("HYPERCHOQ_LOG_LEVEL", "LOUD")],
)
def test_invalid_values_fall_back_with_a_warning(fresh_settings, monkeypatch, caplog, name, value):
    monkeypatch.setenv(name, value)
    with caplog.at_level(logging.WARNING, logger="hyperchoq.config"):
        settings = load_settings()
    assert f"Invalid {name} value '{value}'" in caplog.text
    assert settings.cache_size >= 1
    assert settings.log_level in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
