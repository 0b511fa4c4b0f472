from django.apps import AppConfig


class ParticleConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'particle'
