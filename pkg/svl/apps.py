# svl/apps.py

from django.apps import AppConfig


class SvlConfig(AppConfig):
    name = "svl"
    verbose_name = "Spiking Vision-Language Engine"
