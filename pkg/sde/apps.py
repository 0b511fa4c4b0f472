from django.apps import AppConfig


class SdeConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'sde'
