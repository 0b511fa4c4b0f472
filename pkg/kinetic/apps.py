from django.apps import AppConfig


class KineticConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'kinetic'
